//! Primary and secondary context discovery.
//!
//! Tier 0 holds the outputs of active sensors. A signature fires in round
//! `i + 1` once all its inputs are available at tiers `<= i`, adding its
//! output at tier `i + 1`. Evaluation is semi-naive: only signatures that
//! consume a kind that appeared in the previous round are revisited.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::SignatureUse;
use crate::kb::{DataItemKind, KindId, KnowledgeBase, SigRef};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("{0} is not derivable from the active sensors")]
    NotAvailable(DataItemKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub dpc: String,
    pub signature: usize,
    pub inputs: Vec<DataItemKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputStatus {
    pub kind: DataItemKind,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureStatus {
    pub dpc: String,
    pub signature: usize,
    pub inputs: Vec<InputStatus>,
    pub fired: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DerivationTable {
    /// Per signature, which inputs are available. Ordered by (dpc id, index).
    pub signatures: Vec<SignatureStatus>,
    pub tiers: BTreeMap<DataItemKind, u32>,
    /// Chosen derivation of every kind above tier 0.
    pub derivations: BTreeMap<DataItemKind, Derivation>,
}

/// One row of the discovery result, as served to clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailableKind {
    pub kind: DataItemKind,
    pub tier: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived_by: Option<SignatureUse>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Discovery {
    pub available: BTreeMap<DataItemKind, u32>,
    pub table: DerivationTable,
}

impl Discovery {
    pub fn tier(&self, kind: &DataItemKind) -> Option<u32> {
        self.available.get(kind).copied()
    }

    /// Rows ordered by tier, then kind.
    pub fn entries(&self) -> Vec<AvailableKind> {
        let mut rows: Vec<AvailableKind> = self
            .available
            .iter()
            .map(|(k, t)| AvailableKind {
                kind: k.clone(),
                tier: *t,
                derived_by: self.table.derivations.get(k).map(|d| SignatureUse {
                    dpc: d.dpc.clone(),
                    signature: d.signature,
                }),
            })
            .collect();
        rows.sort_by(|a, b| a.tier.cmp(&b.tier).then_with(|| a.kind.cmp(&b.kind)));
        rows
    }
}

/// Computes (or returns the cached) discovery result for this snapshot.
pub fn discover(kb: &KnowledgeBase) -> Arc<Discovery> {
    kb.discovery_cell().get_or_init(|| Arc::new(saturate(kb))).clone()
}

fn saturate(kb: &KnowledgeBase) -> Discovery {
    let mut tier: HashMap<KindId, u32> = HashMap::new();
    let mut via: HashMap<KindId, SigRef> = HashMap::new();
    let mut remaining: Vec<Vec<usize>> = kb
        .dpcs()
        .iter()
        .map(|d| d.signatures.iter().map(|s| s.inputs.len()).collect())
        .collect();

    let mut frontier: Vec<KindId> = Vec::new();
    for s in kb.sensors().iter().filter(|s| s.active) {
        for k in &s.outputs {
            let id = kb.kind_id(k).expect("sensor outputs are interned");
            if tier.insert(id, 0).is_none() {
                frontier.push(id);
            }
        }
    }

    let mut round = 0;
    while !frontier.is_empty() {
        let mut fired: BTreeMap<KindId, Vec<SigRef>> = BTreeMap::new();
        for &k in &frontier {
            for &r in kb.consumer_refs(k) {
                let left = &mut remaining[r.dpc as usize][r.signature as usize];
                *left -= 1;
                if *left == 0 {
                    let out = kb.sig_io(r).1;
                    if !tier.contains_key(&out) {
                        fired.entry(out).or_default().push(r);
                    }
                }
            }
        }
        round += 1;
        frontier.clear();
        for (out, sigs) in fired {
            let best = sigs
                .into_iter()
                .min_by(|a, b| {
                    kb.dpcs()[a.dpc as usize]
                        .id
                        .cmp(&kb.dpcs()[b.dpc as usize].id)
                        .then(a.signature.cmp(&b.signature))
                })
                .expect("non-empty");
            tier.insert(out, round);
            via.insert(out, best);
            frontier.push(out);
        }
    }

    let mut table = DerivationTable::default();
    for d in kb.dpcs() {
        for (j, sig) in d.signatures.iter().enumerate() {
            let inputs: Vec<InputStatus> = sig
                .inputs
                .iter()
                .map(|k| InputStatus {
                    kind: k.clone(),
                    satisfied: kb.kind_id(k).is_some_and(|id| tier.contains_key(&id)),
                })
                .collect();
            let fired = inputs.iter().all(|i| i.satisfied);
            table.signatures.push(SignatureStatus {
                dpc: d.id.clone(),
                signature: j,
                inputs,
                fired,
            });
        }
    }
    table
        .signatures
        .sort_by(|a, b| a.dpc.cmp(&b.dpc).then(a.signature.cmp(&b.signature)));
    for (k, t) in &tier {
        table.tiers.insert(kb.kind(*k).clone(), *t);
    }
    for (k, r) in via {
        let sig = kb.signature(r);
        table.derivations.insert(
            kb.kind(k).clone(),
            Derivation {
                dpc: kb.dpcs()[r.dpc as usize].id.clone(),
                signature: r.signature as usize,
                inputs: sig.inputs.iter().cloned().collect(),
            },
        );
    }
    Discovery {
        available: table.tiers.clone(),
        table,
    }
}

/// Provenance of an available kind; leaves are tier-0 kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivationTree {
    pub kind: DataItemKind,
    pub tier: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub via: Option<SignatureUse>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<DerivationTree>,
}

impl DerivationTree {
    pub fn leaves(&self) -> Vec<&DataItemKind> {
        if self.inputs.is_empty() {
            vec![&self.kind]
        } else {
            self.inputs.iter().flat_map(|t| t.leaves()).collect()
        }
    }

    /// Compact rendering, e.g. `c-2(c-1(airHumidity, airTemperature), leafWetness)`.
    pub fn render(&self) -> String {
        match &self.via {
            None => self.kind.label.clone(),
            Some(v) => {
                let parts: Vec<String> = self.inputs.iter().map(|t| t.render()).collect();
                format!("{}({})", v.dpc, parts.join(", "))
            }
        }
    }
}

pub fn derivation_of(table: &DerivationTable, kind: &DataItemKind) -> Result<DerivationTree, ContextError> {
    let tier = *table
        .tiers
        .get(kind)
        .ok_or_else(|| ContextError::NotAvailable(kind.clone()))?;
    match table.derivations.get(kind) {
        None => Ok(DerivationTree {
            kind: kind.clone(),
            tier,
            via: None,
            inputs: Vec::new(),
        }),
        Some(d) => Ok(DerivationTree {
            kind: kind.clone(),
            tier,
            via: Some(SignatureUse {
                dpc: d.dpc.clone(),
                signature: d.signature,
            }),
            // Inputs sit at strictly lower tiers, so the recursion terminates.
            inputs: d
                .inputs
                .iter()
                .map(|k| derivation_of(table, k))
                .collect::<Result<_, _>>()?,
        }),
    }
}
