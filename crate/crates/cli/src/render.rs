//! Plain-text and JSON views of command results.

use std::fmt::Write;

use senscomp_core::composer::{ComposeOutcome, RecommendationReport, SignatureUse};
use senscomp_core::context::AvailableKind;
use senscomp_core::kb::{Question, Task, ValidationReport, Violation};
use senscomp_core::{KnowledgeBase, Ranking, Solution};
use serde::Serialize;

fn signature(u: &SignatureUse) -> String {
    if u.signature == 0 {
        u.dpc.clone()
    } else {
        format!("{}#{}", u.dpc, u.signature)
    }
}

#[derive(Serialize)]
pub struct ValidationView<'a> {
    kb_version: &'a str,
    clean: bool,
    violations: &'a [Violation],
}

impl<'a> ValidationView<'a> {
    pub fn new(kb: &'a KnowledgeBase, report: &'a ValidationReport) -> Self {
        Self {
            kb_version: kb.version_hash(),
            clean: report.is_clean(),
            violations: &report.violations,
        }
    }
}

pub fn validation(kb: &KnowledgeBase, report: &ValidationReport) -> String {
    if report.is_clean() {
        format!(
            "ok: {} sensors, {} dpcs, {} tasks, {} questions (version {})\n",
            kb.sensors().len(),
            kb.dpcs().len(),
            kb.tasks().len(),
            kb.questions().len(),
            kb.version_hash()
        )
    } else {
        format!("{} violation(s):\n{report}", report.violations.len())
    }
}

pub fn tasks(tasks: &[&Task], questions: &[&Question]) -> String {
    let mut s = String::new();
    for t in tasks {
        let _ = writeln!(s, "{}\t{}", t.id, t.name);
    }
    if tasks.is_empty() {
        s.push_str("no matching tasks\n");
    }
    for q in questions {
        let _ = writeln!(s, "? {}\t{}", q.id, q.text);
    }
    s
}

#[derive(Serialize)]
struct SolutionView<'a> {
    hash: String,
    expression: String,
    resources: usize,
    #[serde(flatten)]
    solution: &'a Solution,
}

#[derive(Serialize)]
pub struct ComposeView<'a> {
    task_id: &'a str,
    solutions: Vec<SolutionView<'a>>,
    truncated: bool,
    depth_limited: bool,
    report: &'a RecommendationReport,
}

impl<'a> ComposeView<'a> {
    pub fn new(task_id: &'a str, outcome: &'a ComposeOutcome) -> Self {
        Self {
            task_id,
            solutions: outcome
                .solutions
                .iter()
                .map(|s| SolutionView {
                    hash: s.canonical_hash(),
                    expression: s.expression(),
                    resources: s.resource_count(),
                    solution: s,
                })
                .collect(),
            truncated: outcome.truncated,
            depth_limited: outcome.depth_limited,
            report: &outcome.report,
        }
    }
}

pub fn composition(task: &str, outcome: &ComposeOutcome) -> String {
    let mut s = String::new();
    match outcome.solutions.len() {
        0 => {
            let _ = writeln!(s, "task {task}: no solutions");
        }
        1 => {
            let _ = writeln!(s, "task {task}: 1 solution");
        }
        n => {
            let _ = writeln!(s, "task {task}: {n} solutions");
        }
    }
    for sol in &outcome.solutions {
        let _ = writeln!(s, "  {}  {}", sol.canonical_hash(), sol.expression());
    }
    if outcome.truncated {
        s.push_str("  (solution list truncated)\n");
    }
    if outcome.depth_limited {
        s.push_str("  (some branches were cut at the depth limit)\n");
    }
    let report = &outcome.report;
    if !report.unsatisfiable_kinds.is_empty() {
        s.push_str("unsatisfiable kinds:\n");
        for k in &report.unsatisfiable_kinds {
            let _ = writeln!(s, "  {k}");
        }
    }
    if !report.missing_sets.is_empty() {
        s.push_str("deploy sensors for any one of:\n");
        for m in &report.missing_sets {
            let kinds: Vec<_> = m.kinds.iter().map(ToString::to_string).collect();
            let _ = write!(s, "  {{{}}}", kinds.join(", "));
            if !m.unlocks.is_empty() {
                let sigs: Vec<_> = m.unlocks.iter().map(signature).collect();
                let _ = write!(s, "  unlocks {}", sigs.join(", "));
            }
            if !m.inactive_sensors.is_empty() {
                let _ = write!(s, "  inactive: {}", m.inactive_sensors.join(", "));
            }
            s.push('\n');
        }
    }
    s
}

pub fn context(entries: &[AvailableKind]) -> String {
    let mut s = String::new();
    let mut tier = None;
    for e in entries {
        if tier != Some(e.tier) {
            tier = Some(e.tier);
            let _ = writeln!(s, "tier {}", e.tier);
        }
        match &e.derived_by {
            Some(u) => {
                let _ = writeln!(s, "  {}  via {}", e.kind, signature(u));
            }
            None => {
                let _ = writeln!(s, "  {}", e.kind);
            }
        }
    }
    s
}

pub fn ranking(ranking: &Ranking, solutions: &[Solution]) -> String {
    let mut s = String::from("weights:");
    for (name, w) in &ranking.weights {
        let _ = write!(s, " {name}={w:.4}");
    }
    s.push('\n');
    for (pos, score) in ranking.scores.iter().enumerate() {
        let expr = solutions[score.solution].expression();
        let _ = writeln!(s, "{:>3}  {:.6}  {}  {}", pos + 1, score.total, score.hash, expr);
    }
    for d in &ranking.defaulted {
        let _ = writeln!(s, "note: {} has no {}; default used", d.resource, d.attribute);
    }
    s
}
