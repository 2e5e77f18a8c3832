//! Resource insufficiency reports.
//!
//! Candidate kinds are the dead ends met during the search: kinds with no
//! active sensor that either nothing produces or only inactive sensors
//! produce. A missing set is a minimal subset of those which, once sensable,
//! lets the task compose. Sets of up to three kinds are found exhaustively;
//! past that a single set is shrunk greedily from the full candidate list.

use std::collections::HashSet;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::search::{self, Run};
use super::ComposeLimits;
use crate::kb::{DataItemKind, KindId, KnowledgeBase};

const EXHAUSTIVE_SIZE: usize = 3;
const EXHAUSTIVE_CANDIDATES: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignatureUse {
    pub dpc: String,
    pub signature: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingSet {
    /// Sorted kinds that would have to become sensable together.
    pub kinds: Vec<DataItemKind>,
    /// DPC signatures that consume these kinds in the enabled composition.
    pub unlocks: Vec<SignatureUse>,
    /// Described but inactive sensors that could provide these kinds.
    pub inactive_sensors: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationReport {
    pub unsatisfiable_kinds: Vec<DataItemKind>,
    /// Sorted by size, then lexicographically.
    pub missing_sets: Vec<MissingSet>,
}

struct Probe<'a> {
    kb: &'a KnowledgeBase,
    required: &'a [KindId],
    limits: &'a ComposeLimits,
}

impl Probe<'_> {
    fn enabled(&self, extra: &[KindId]) -> Option<Run> {
        let extra: HashSet<KindId> = extra.iter().copied().collect();
        let run = search::run(self.kb, self.required, self.limits, &extra, 1);
        (!run.solutions.is_empty()).then_some(run)
    }

    fn describe(&self, kinds: Vec<KindId>, run: &Run) -> MissingSet {
        let kb = self.kb;
        let mut unlocks: Vec<SignatureUse> = run
            .solutions
            .iter()
            .flat_map(|(w, _)| search::dpc_nodes_fed_by_synthetic(w))
            .map(|r| SignatureUse {
                dpc: kb.dpcs()[r.dpc as usize].id.clone(),
                signature: r.signature as usize,
            })
            .collect();
        unlocks.sort();
        unlocks.dedup();
        let mut inactive: Vec<String> = kinds
            .iter()
            .flat_map(|k| kb.sensors_producing(kb.kind(*k)))
            .filter(|s| !s.active)
            .map(|s| s.id.clone())
            .collect();
        inactive.sort();
        inactive.dedup();
        let mut kinds: Vec<DataItemKind> = kinds.iter().map(|k| kb.kind(*k).clone()).collect();
        kinds.sort();
        MissingSet {
            kinds,
            unlocks,
            inactive_sensors: inactive,
        }
    }
}

pub(crate) fn report(
    kb: &KnowledgeBase,
    required: &[KindId],
    limits: &ComposeLimits,
    run: &Run,
    compute_sets: bool,
) -> RecommendationReport {
    let mut candidates: Vec<KindId> = run.missing.iter().copied().collect();
    candidates.sort_by(|a, b| kb.kind(*a).cmp(kb.kind(*b)));
    let unsatisfiable_kinds = candidates.iter().map(|k| kb.kind(*k).clone()).collect();
    if !compute_sets || candidates.is_empty() {
        return RecommendationReport {
            unsatisfiable_kinds,
            missing_sets: Vec::new(),
        };
    }

    let probe = Probe { kb, required, limits };
    let mut found: Vec<(Vec<KindId>, Run)> = Vec::new();
    if candidates.len() <= EXHAUSTIVE_CANDIDATES {
        for size in 1..=EXHAUSTIVE_SIZE.min(candidates.len()) {
            for combo in candidates.iter().copied().combinations(size) {
                if found.iter().any(|(f, _)| f.iter().all(|k| combo.contains(k))) {
                    continue;
                }
                if let Some(r) = probe.enabled(&combo) {
                    found.push((combo, r));
                }
            }
        }
    }
    if found.is_empty() {
        if let Some(mut last) = probe.enabled(&candidates) {
            let mut set = candidates.clone();
            for k in &candidates {
                let trial: Vec<KindId> = set.iter().copied().filter(|x| x != k).collect();
                if let Some(r) = probe.enabled(&trial) {
                    set = trial;
                    last = r;
                }
            }
            found.push((set, last));
        }
    }

    let mut missing_sets: Vec<MissingSet> = found.into_iter().map(|(k, r)| probe.describe(k, &r)).collect();
    missing_sets.sort_by(|a, b| a.kinds.len().cmp(&b.kinds.len()).then_with(|| a.kinds.cmp(&b.kinds)));
    RecommendationReport {
        unsatisfiable_kinds,
        missing_sets,
    }
}
