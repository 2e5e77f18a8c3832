//! Backward search from required kinds to active sensors.
//!
//! `satisfy` lists every way to produce one kind: active sensors first, then
//! each DPC signature whose inputs can all be satisfied recursively. A
//! signature is cut when it needs a kind already on the recursion path, so
//! cyclic DPC graphs terminate and no alternative contains a cycle.
//!
//! Results are memoized per kind. The only part of the path that can
//! influence a kind's subtree is the part lying in the same strongly
//! connected component of the kind dependency graph, so that slice (plus the
//! remaining depth budget) forms the memo key.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::rc::Rc;

use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::{ComposeLimits, Edge, Sink, Solution, SolutionNode};
use crate::kb::{DataItemKind, KindId, KnowledgeBase, SigRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Node {
    Sensor { sensor: u32, kind: KindId },
    /// A hypothetical sensor for a kind, used when probing recommendations.
    Synthetic(KindId),
    Dpc(SigRef),
}

/// Node -> chosen producer per input kind (empty for sensors).
pub(crate) type Wiring = BTreeMap<Node, Vec<(KindId, Node)>>;

#[derive(Debug, Clone)]
struct Fragment {
    root: Node,
    wiring: Wiring,
}

#[derive(Debug, Default)]
struct Outcome {
    alternatives: Vec<Fragment>,
    missing: BTreeSet<KindId>,
}

pub(crate) struct Run {
    /// Wiring plus the sink chosen for each required kind.
    pub solutions: Vec<(Wiring, Vec<(KindId, Node)>)>,
    pub missing: BTreeSet<KindId>,
    pub truncated: bool,
    pub depth_limited: bool,
}

type MemoKey = (KindId, Vec<KindId>, usize);

struct Search<'a> {
    kb: &'a KnowledgeBase,
    shared: bool,
    max_depth: usize,
    cap: usize,
    extra: &'a HashSet<KindId>,
    blocked: HashSet<KindId>,
    scc: HashMap<KindId, usize>,
    memo: HashMap<MemoKey, Rc<Outcome>>,
    truncated: bool,
    depth_limited: bool,
}

fn output_of(kb: &KnowledgeBase, node: Node) -> KindId {
    match node {
        Node::Sensor { kind, .. } | Node::Synthetic(kind) => kind,
        Node::Dpc(r) => kb.sig_io(r).1,
    }
}

/// Strongly connected components of the "kind needs kind" graph reachable
/// from `roots`.
fn components(kb: &KnowledgeBase, roots: &[KindId]) -> HashMap<KindId, usize> {
    let mut graph = DiGraph::<KindId, ()>::new();
    let mut ids = HashMap::new();
    let mut stack = Vec::new();
    for &r in roots {
        if let std::collections::hash_map::Entry::Vacant(e) = ids.entry(r) {
            e.insert(graph.add_node(r));
            stack.push(r);
        }
    }
    while let Some(k) = stack.pop() {
        let from = ids[&k];
        for &r in kb.producer_refs(k) {
            for &input in kb.sig_io(r).0 {
                let to = *ids.entry(input).or_insert_with(|| {
                    stack.push(input);
                    graph.add_node(input)
                });
                graph.add_edge(from, to, ());
            }
        }
    }
    let mut out = HashMap::with_capacity(ids.len());
    for (i, comp) in petgraph::algo::tarjan_scc(&graph).into_iter().enumerate() {
        for n in comp {
            out.insert(graph[n], i);
        }
    }
    out
}

impl<'a> Search<'a> {
    fn new(
        kb: &'a KnowledgeBase,
        limits: &ComposeLimits,
        extra: &'a HashSet<KindId>,
        blocked: HashSet<KindId>,
        roots: &[KindId],
    ) -> Self {
        Self {
            kb,
            shared: limits.allow_shared_subtrees,
            max_depth: limits.max_depth,
            cap: limits.max_solutions.max(1),
            extra,
            blocked,
            scc: components(kb, roots),
            memo: HashMap::new(),
            truncated: false,
            depth_limited: false,
        }
    }

    /// Adds `other` into `acc`. Fails when a node would get two different
    /// input wirings or, in shared mode, a kind would get two producers.
    fn merge(&self, acc: &mut Wiring, producers: &mut HashMap<KindId, Node>, other: &Wiring) -> bool {
        for (node, inputs) in other {
            match acc.get(node) {
                Some(existing) if existing != inputs => return false,
                Some(_) => continue,
                None => {}
            }
            if self.shared {
                let kind = output_of(self.kb, *node);
                match producers.get(&kind) {
                    Some(p) if p != node => return false,
                    _ => {
                        producers.insert(kind, *node);
                    }
                }
            }
            acc.insert(*node, inputs.clone());
        }
        true
    }

    /// Cartesian product of per-kind alternatives, dropping inconsistent
    /// combinations and stopping at `cap`.
    fn combine(&mut self, parts: &[(KindId, Rc<Outcome>)], cap: usize) -> Vec<(Wiring, Vec<(KindId, Node)>)> {
        type Partial = (Wiring, HashMap<KindId, Node>, Vec<(KindId, Node)>);
        let mut acc: Vec<Partial> = vec![(Wiring::new(), HashMap::new(), Vec::new())];
        for (kind, outcome) in parts {
            let mut next = Vec::new();
            'outer: for (wiring, producers, chosen) in &acc {
                for alt in &outcome.alternatives {
                    let mut w = wiring.clone();
                    let mut p = producers.clone();
                    if !self.merge(&mut w, &mut p, &alt.wiring) {
                        continue;
                    }
                    if next.len() == cap {
                        self.truncated = true;
                        break 'outer;
                    }
                    let mut c = chosen.clone();
                    c.push((*kind, alt.root));
                    next.push((w, p, c));
                }
            }
            acc = next;
            if acc.is_empty() {
                break;
            }
        }
        acc.into_iter().map(|(w, _, c)| (w, c)).collect()
    }

    fn satisfy(&mut self, kind: KindId, path: &mut Vec<KindId>) -> Rc<Outcome> {
        if path.len() >= self.max_depth {
            self.depth_limited = true;
            return Rc::new(Outcome::default());
        }
        let component = self.scc.get(&kind).copied();
        let mut relevant: Vec<KindId> = path
            .iter()
            .filter(|p| component.is_some() && self.scc.get(p).copied() == component)
            .copied()
            .collect();
        relevant.sort();
        let key = (kind, relevant, self.max_depth - path.len());
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }

        let kb = self.kb;
        let mut out = Outcome::default();
        let mut any_inactive = false;
        for &s in kb.sensor_positions(kind) {
            if kb.sensors()[s as usize].active {
                let root = Node::Sensor { sensor: s, kind };
                out.alternatives.push(Fragment {
                    root,
                    wiring: [(root, Vec::new())].into(),
                });
            } else {
                any_inactive = true;
            }
        }
        if self.extra.contains(&kind) {
            let root = Node::Synthetic(kind);
            out.alternatives.push(Fragment {
                root,
                wiring: [(root, Vec::new())].into(),
            });
        }
        let producers = kb.producer_refs(kind);
        if out.alternatives.is_empty() && (producers.is_empty() || any_inactive) {
            out.missing.insert(kind);
        }

        path.push(kind);
        'sigs: for &r in producers {
            let inputs = kb.sig_io(r).0;
            if inputs
                .iter()
                .any(|i| *i == kind || path.contains(i) || self.blocked.contains(i))
            {
                continue;
            }
            let mut parts = Vec::with_capacity(inputs.len());
            let mut feasible = true;
            for &input in inputs {
                let sub = self.satisfy(input, path);
                out.missing.extend(sub.missing.iter().copied());
                feasible &= !sub.alternatives.is_empty();
                parts.push((input, sub));
            }
            if !feasible {
                continue;
            }
            let root = Node::Dpc(r);
            for (mut wiring, chosen) in self.combine(&parts, self.cap) {
                if out.alternatives.len() == self.cap {
                    self.truncated = true;
                    break 'sigs;
                }
                wiring.insert(root, chosen);
                out.alternatives.push(Fragment { root, wiring });
            }
        }
        path.pop();

        let out = Rc::new(out);
        self.memo.insert(key, out.clone());
        out
    }
}

/// Full search for a required stream. `extra` kinds behave as if an active
/// sensor produced them; the product stops after `stop_after` solutions.
pub(crate) fn run(
    kb: &KnowledgeBase,
    required: &[KindId],
    limits: &ComposeLimits,
    extra: &HashSet<KindId>,
    stop_after: usize,
) -> Run {
    let mut search = Search::new(kb, limits, extra, HashSet::new(), required);
    let mut parts = Vec::with_capacity(required.len());
    let mut missing = BTreeSet::new();
    for &k in required {
        let outcome = search.satisfy(k, &mut Vec::new());
        missing.extend(outcome.missing.iter().copied());
        parts.push((k, outcome));
    }
    let solutions = if parts.iter().any(|(_, o)| o.alternatives.is_empty()) {
        Vec::new()
    } else {
        let cap = search.cap.min(stop_after);
        let mut seen = BTreeSet::new();
        search
            .combine(&parts, cap)
            .into_iter()
            .filter(|(w, _)| seen.insert(w.clone()))
            .collect()
    };
    Run {
        solutions,
        missing,
        truncated: search.truncated,
        depth_limited: search.depth_limited,
    }
}

pub(crate) fn public_node(kb: &KnowledgeBase, node: Node) -> SolutionNode {
    match node {
        Node::Sensor { sensor, kind } => SolutionNode::sensor(kb.sensors()[sensor as usize].id.clone(), kb.kind(kind).clone()),
        Node::Synthetic(kind) => {
            let k = kb.kind(kind);
            SolutionNode::sensor(format!("+{}", k.label), k.clone())
        }
        Node::Dpc(r) => SolutionNode::dpc(
            kb.dpcs()[r.dpc as usize].id.clone(),
            r.signature as usize,
            kb.kind(kb.sig_io(r).1).clone(),
        ),
    }
}

fn public_graph(kb: &KnowledgeBase, wiring: &Wiring) -> (BTreeSet<SolutionNode>, BTreeSet<Edge>) {
    let mut names = HashMap::with_capacity(wiring.len());
    for &n in wiring.keys() {
        names.insert(n, public_node(kb, n));
    }
    let nodes = names.values().cloned().collect();
    let mut edges = BTreeSet::new();
    for (consumer, inputs) in wiring {
        for (kind, producer) in inputs {
            edges.insert(Edge {
                producer: names[producer].clone(),
                consumer: names[consumer].clone(),
                kind: kb.kind(*kind).clone(),
            });
        }
    }
    (nodes, edges)
}

pub(crate) fn to_solution(kb: &KnowledgeBase, found: &(Wiring, Vec<(KindId, Node)>), _required: &[KindId]) -> Solution {
    let (wiring, sinks) = found;
    let (nodes, edges) = public_graph(kb, wiring);
    Solution {
        nodes,
        edges,
        sinks: sinks
            .iter()
            .map(|(k, n)| Sink {
                kind: kb.kind(*k).clone(),
                node: public_node(kb, *n),
            })
            .collect(),
    }
}

pub(crate) fn dpc_nodes_fed_by_synthetic(wiring: &Wiring) -> Vec<SigRef> {
    wiring
        .iter()
        .filter_map(|(node, inputs)| match node {
            Node::Dpc(r) if inputs.iter().any(|(_, p)| matches!(p, Node::Synthetic(_))) => Some(*r),
            _ => None,
        })
        .collect()
}

/// A sub-DAG producing one kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialSolution {
    pub root: SolutionNode,
    pub nodes: BTreeSet<SolutionNode>,
    pub edges: BTreeSet<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindSatisfaction {
    /// Sensor alternatives first, then DPC alternatives by (dpc id, signature).
    pub alternatives: Vec<PartialSolution>,
    /// Kinds met along the way that nothing usable produces.
    pub missing: BTreeSet<DataItemKind>,
}

/// Every way to produce `kind` without using any kind in `path`, which
/// also consumes that much of the depth budget.
pub fn satisfy_kind(
    kb: &KnowledgeBase,
    kind: &DataItemKind,
    path: &BTreeSet<DataItemKind>,
    limits: &ComposeLimits,
) -> KindSatisfaction {
    let Some(id) = kb.kind_id(kind) else {
        return KindSatisfaction {
            alternatives: Vec::new(),
            missing: [kind.clone()].into(),
        };
    };
    let blocked: HashSet<KindId> = path.iter().filter_map(|k| kb.kind_id(k)).collect();
    let limits = ComposeLimits {
        max_depth: limits.max_depth.saturating_sub(path.len()),
        ..*limits
    };
    let extra = HashSet::new();
    let mut search = Search::new(kb, &limits, &extra, blocked, &[id]);
    let outcome = search.satisfy(id, &mut Vec::new());
    KindSatisfaction {
        alternatives: outcome
            .alternatives
            .iter()
            .map(|f| {
                let (nodes, edges) = public_graph(kb, &f.wiring);
                PartialSolution {
                    root: public_node(kb, f.root),
                    nodes,
                    edges,
                }
            })
            .collect(),
        missing: outcome.missing.iter().map(|k| kb.kind(*k).clone()).collect(),
    }
}
