//! Weighted multi-attribute ranking of alternative solutions.
//!
//! Each attribute is aggregated per solution (summed for cost attributes,
//! weakest link for benefit attributes), min-max normalized across the
//! candidate set so that 0 is best, and combined with renormalized user
//! weights. Lower totals rank first.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::{Solution, SolutionNode};
use crate::kb::{KnowledgeBase, Polarity};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("attribute `{0}` is not in the registry")]
    UnknownAttribute(String),
    #[error("weight for `{name}` must be finite and non-negative, got {value}")]
    InvalidWeight { name: String, value: f64 },
    #[error("at least one weight must be positive")]
    AllZero,
    #[error("no solutions to rank")]
    NoSolutions,
    #[error("malformed weights `{0}`, expected name=number[,name=number...]")]
    Malformed(String),
}

/// User priorities per attribute; renormalized to sum to 1 before use.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector {
    pub weights: BTreeMap<String, f64>,
}

impl WeightVector {
    pub fn new(weights: BTreeMap<String, f64>) -> Self {
        Self { weights }
    }

    /// Every registered attribute weighted equally.
    pub fn equal(kb: &KnowledgeBase) -> Self {
        Self {
            weights: kb.header().attributes.keys().map(|k| (k.clone(), 1.0)).collect(),
        }
    }

    /// Validated weights summing to 1. Attributes left out weigh 0.
    pub fn normalized(&self, kb: &KnowledgeBase) -> Result<BTreeMap<String, f64>, CostError> {
        for (name, value) in &self.weights {
            if !kb.header().attributes.contains_key(name) {
                return Err(CostError::UnknownAttribute(name.clone()));
            }
            if !value.is_finite() || *value < 0.0 {
                return Err(CostError::InvalidWeight {
                    name: name.clone(),
                    value: *value,
                });
            }
        }
        let mut scale = 1.0;
        let mut sum: f64 = self.weights.values().sum();
        if sum.is_infinite() {
            // Finite weights can still overflow when added.
            scale = self.weights.values().copied().fold(0.0, f64::max);
            sum = self.weights.values().map(|w| w / scale).sum();
        }
        if sum <= 0.0 {
            if kb.header().attributes.is_empty() {
                return Ok(BTreeMap::new());
            }
            return Err(CostError::AllZero);
        }
        Ok(kb
            .header()
            .attributes
            .keys()
            .map(|k| (k.clone(), self.weights.get(k).copied().unwrap_or(0.0) / scale / sum))
            .collect())
    }
}

/// Parses the `--weights accuracy=3,energy=1` flag form.
pub fn parse_weights(text: &str) -> Result<WeightVector, CostError> {
    let mut weights = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part
            .split_once('=')
            .ok_or_else(|| CostError::Malformed(text.to_owned()))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CostError::Malformed(text.to_owned()))?;
        let name = name.trim();
        if name.is_empty() || weights.insert(name.to_owned(), value).is_some() {
            return Err(CostError::Malformed(text.to_owned()));
        }
    }
    if weights.is_empty() {
        return Err(CostError::Malformed(text.to_owned()));
    }
    Ok(WeightVector { weights })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultedValue {
    pub resource: String,
    pub attribute: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub raw: BTreeMap<String, f64>,
    /// Cost attributes a resource did not declare; the registry default was used.
    pub defaulted: Vec<DefaultedValue>,
}

fn resources<'a>(kb: &'a KnowledgeBase, solution: &Solution) -> Vec<(&'a str, &'a BTreeMap<String, f64>)> {
    // A physical resource counts once even if it serves several nodes.
    let ids: BTreeSet<(bool, &str)> = solution.nodes.iter().map(|n| (n.is_sensor(), n.resource())).collect();
    ids.into_iter()
        .filter_map(|(is_sensor, id)| {
            if is_sensor {
                kb.sensor(id).map(|s| (s.id.as_str(), &s.context))
            } else {
                kb.dpc(id).map(|d| (d.id.as_str(), &d.context))
            }
        })
        .collect()
}

fn aggregate_one(
    kb: &KnowledgeBase,
    used: &[(&str, &BTreeMap<String, f64>)],
    name: &str,
    defaulted: &mut Vec<DefaultedValue>,
) -> Result<f64, CostError> {
    let spec = kb
        .header()
        .attributes
        .get(name)
        .ok_or_else(|| CostError::UnknownAttribute(name.to_owned()))?;
    Ok(match spec.polarity {
        Polarity::Cost => used
            .iter()
            .map(|(id, ctx)| match ctx.get(name) {
                Some(v) => *v,
                None => {
                    defaulted.push(DefaultedValue {
                        resource: id.to_string(),
                        attribute: name.to_owned(),
                    });
                    spec.default
                }
            })
            .sum(),
        Polarity::Benefit => used
            .iter()
            .filter_map(|(_, ctx)| ctx.get(name).copied())
            .reduce(f64::min)
            .unwrap_or(spec.default),
    })
}

/// Raw value of one attribute for a solution.
pub fn aggregate_attribute(kb: &KnowledgeBase, solution: &Solution, name: &str) -> Result<f64, CostError> {
    aggregate_one(kb, &resources(kb, solution), name, &mut Vec::new())
}

/// Raw values of every registered attribute.
pub fn aggregate_attributes(kb: &KnowledgeBase, solution: &Solution) -> Aggregate {
    let used = resources(kb, solution);
    let mut out = Aggregate::default();
    for name in kb.header().attributes.keys() {
        let v = aggregate_one(kb, &used, name, &mut out.defaulted).expect("registered attribute");
        out.raw.insert(name.clone(), v);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionScore {
    /// Position of the solution in the ranked input list.
    pub solution: usize,
    pub hash: String,
    pub nodes: usize,
    pub raw: BTreeMap<String, f64>,
    /// 0 is the best value among the candidates, 1 the worst.
    pub normalized: BTreeMap<String, f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub weights: BTreeMap<String, f64>,
    /// Best first.
    pub scores: Vec<SolutionScore>,
    pub defaulted: Vec<DefaultedValue>,
}

/// Totals closer than this are treated as equal and fall through to the
/// tie-breakers. Quantizing keeps the ordering a total order.
const TIE_QUANTUM: f64 = 1e-9;

/// A solution reduced to what ranking needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub hash: String,
    pub nodes: usize,
    pub raw: BTreeMap<String, f64>,
}

pub fn rank(kb: &KnowledgeBase, solutions: &[Solution], weights: &WeightVector) -> Result<Ranking, CostError> {
    let aggregates: Vec<Aggregate> = solutions.iter().map(|s| aggregate_attributes(kb, s)).collect();
    let candidates: Vec<Candidate> = solutions
        .iter()
        .zip(&aggregates)
        .map(|(s, a)| Candidate {
            hash: s.canonical_hash(),
            nodes: s.nodes.len(),
            raw: a.raw.clone(),
        })
        .collect();
    let (weights, scores) = rank_candidates(kb, &candidates, weights)?;
    let mut defaulted: Vec<DefaultedValue> = aggregates.into_iter().flat_map(|a| a.defaulted).collect();
    defaulted.sort_by(|a, b| (&a.resource, &a.attribute).cmp(&(&b.resource, &b.attribute)));
    defaulted.dedup();
    Ok(Ranking {
        weights,
        scores,
        defaulted,
    })
}

/// Normalizes and scores precomputed raw aggregates. Every candidate must
/// carry a raw value for each registered attribute.
pub fn rank_candidates(
    kb: &KnowledgeBase,
    candidates: &[Candidate],
    weights: &WeightVector,
) -> Result<(BTreeMap<String, f64>, Vec<SolutionScore>), CostError> {
    if candidates.is_empty() {
        return Err(CostError::NoSolutions);
    }
    let weights = weights.normalized(kb)?;
    let mut scores: Vec<SolutionScore> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| SolutionScore {
            solution: i,
            hash: c.hash.clone(),
            nodes: c.nodes,
            raw: c.raw.clone(),
            normalized: BTreeMap::new(),
            total: 0.0,
        })
        .collect();

    for (name, spec) in &kb.header().attributes {
        let values: Vec<f64> = candidates
            .iter()
            .map(|c| c.raw.get(name).copied().unwrap_or(spec.default))
            .collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = weights.get(name).copied().unwrap_or(0.0);
        for (score, v) in scores.iter_mut().zip(&values) {
            let unit = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
            let n = match spec.polarity {
                Polarity::Cost => unit,
                Polarity::Benefit if hi > lo => 1.0 - unit,
                Polarity::Benefit => 0.0,
            };
            score.normalized.insert(name.clone(), n);
            score.total += w * n;
        }
    }

    scores.sort_by(|a, b| {
        let qa = (a.total / TIE_QUANTUM).round() as i64;
        let qb = (b.total / TIE_QUANTUM).round() as i64;
        qa.cmp(&qb)
            .then(a.nodes.cmp(&b.nodes))
            .then_with(|| a.hash.cmp(&b.hash))
    });
    Ok((weights, scores))
}

/// Distinct sensors in a solution, for display.
pub fn sensors_of(solution: &Solution) -> BTreeSet<&str> {
    solution
        .nodes
        .iter()
        .filter_map(|n| match n {
            SolutionNode::Sensor { sensor, .. } => Some(sensor.as_str()),
            _ => None,
        })
        .collect()
}
