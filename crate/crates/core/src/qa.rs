//! Question/answer task filtering.
//!
//! Every answer adds a `(concept, value)` constraint; a task matches when it
//! carries all of them. Questions are only offered when they can still
//! discriminate among the matching tasks, and only answers that leave at
//! least one task are offered.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KnowledgeBase, Question, Task};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QaError {
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("question `{0}` is not available for the current answers")]
    Unavailable(String),
    #[error("question `{0}` was already answered")]
    AlreadyAnswered(String),
    #[error("`{answer}` is not an offered answer to `{question}`")]
    NotOffered { question: String, answer: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{0}` does not match the current answers")]
    TaskNotMatching(String),
    #[error("malformed answer `{0}`, expected question=value")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub question_id: String,
    pub answer: String,
}

/// Ordered, conjunctive set of answered questions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConstraintSet {
    entries: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a set from `(question, answer)` pairs, rejecting repeated questions.
    pub fn from_pairs<I, Q, A>(pairs: I) -> Result<Self, QaError>
    where
        I: IntoIterator<Item = (Q, A)>,
        Q: Into<String>,
        A: Into<String>,
    {
        let mut set = Self::new();
        for (q, a) in pairs {
            set.push(q, a)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, question_id: impl Into<String>, answer: impl Into<String>) -> Result<(), QaError> {
        let question_id = question_id.into();
        if self.contains(&question_id) {
            return Err(QaError::AlreadyAnswered(question_id));
        }
        self.entries.push(Constraint {
            question_id,
            answer: answer.into(),
        });
        Ok(())
    }

    pub fn remove(&mut self, question_id: &str) -> bool {
        let before = self.entries.len();
        self.entries.retain(|c| c.question_id != question_id);
        before != self.entries.len()
    }

    pub fn contains(&self, question_id: &str) -> bool {
        self.entries.iter().any(|c| c.question_id == question_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Constraint> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses a `question=value` command line answer.
pub fn parse_answer(text: &str) -> Result<(String, String), QaError> {
    match text.split_once('=') {
        Some((q, a)) if !q.trim().is_empty() && !a.trim().is_empty() => {
            Ok((q.trim().to_owned(), a.trim().to_owned()))
        }
        _ => Err(QaError::Malformed(text.to_owned())),
    }
}

fn resolve<'a>(kb: &'a KnowledgeBase, constraints: &'a ConstraintSet) -> Result<Vec<(&'a str, &'a str)>, QaError> {
    constraints
        .iter()
        .map(|c| {
            kb.question(&c.question_id)
                .map(|q| (q.concept.as_str(), c.answer.as_str()))
                .ok_or_else(|| QaError::UnknownQuestion(c.question_id.clone()))
        })
        .collect()
}

/// Tasks carrying every constrained binding, ordered by id.
pub fn matching_tasks<'a>(kb: &'a KnowledgeBase, constraints: &ConstraintSet) -> Result<Vec<&'a Task>, QaError> {
    let bindings = resolve(kb, constraints)?;
    let Some((concept, value)) = bindings
        .iter()
        .min_by_key(|(c, v)| kb.task_positions_with_binding(c, v).len())
    else {
        return Ok(kb.tasks_by_id().collect());
    };
    Ok(kb
        .tasks_with_binding(concept, value)
        .filter(|t| bindings.iter().all(|(c, v)| t.binding(c) == Some(v)))
        .collect())
}

fn values_by_concept<'a>(tasks: &[&'a Task]) -> BTreeMap<&'a str, BTreeSet<&'a str>> {
    let mut map: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for t in tasks {
        for b in &t.concepts {
            map.entry(b.concept.as_str()).or_default().insert(b.value.as_str());
        }
    }
    map
}

/// Unanswered questions whose concept is bound by some matching task,
/// most discriminating first, ties by question id.
pub fn available_questions<'a>(
    kb: &'a KnowledgeBase,
    constraints: &ConstraintSet,
) -> Result<Vec<&'a Question>, QaError> {
    let tasks = matching_tasks(kb, constraints)?;
    let values = values_by_concept(&tasks);
    let mut out: Vec<(usize, &Question)> = kb
        .questions()
        .iter()
        .filter(|q| !constraints.contains(&q.id))
        .filter_map(|q| values.get(q.concept.as_str()).map(|v| (v.len(), q)))
        .collect();
    out.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    Ok(out.into_iter().map(|(_, q)| q).collect())
}

/// Distinct values of the question's concept among matching tasks, sorted.
pub fn answers_for(kb: &KnowledgeBase, constraints: &ConstraintSet, question_id: &str) -> Result<Vec<String>, QaError> {
    let question = kb
        .question(question_id)
        .ok_or_else(|| QaError::UnknownQuestion(question_id.to_owned()))?;
    if constraints.contains(question_id) {
        return Err(QaError::AlreadyAnswered(question_id.to_owned()));
    }
    let tasks = matching_tasks(kb, constraints)?;
    let values: BTreeSet<&str> = tasks.iter().filter_map(|t| t.binding(&question.concept)).collect();
    if values.is_empty() {
        return Err(QaError::Unavailable(question_id.to_owned()));
    }
    Ok(values.into_iter().map(str::to_owned).collect())
}

/// One caller's progress through the question/answer flow over a pinned
/// knowledge base snapshot.
#[derive(Debug, Clone)]
pub struct QaSession {
    kb: Arc<KnowledgeBase>,
    constraints: ConstraintSet,
    selected_task: Option<String>,
}

impl QaSession {
    pub fn new(kb: Arc<KnowledgeBase>) -> Self {
        Self {
            kb,
            constraints: ConstraintSet::new(),
            selected_task: None,
        }
    }

    pub fn kb(&self) -> &Arc<KnowledgeBase> {
        &self.kb
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn selected_task(&self) -> Option<&str> {
        self.selected_task.as_deref()
    }

    pub fn matching_tasks(&self) -> Vec<&Task> {
        // Constraints only ever enter through apply_answer, so they resolve.
        matching_tasks(&self.kb, &self.constraints).unwrap_or_default()
    }

    pub fn available_questions(&self) -> Vec<&Question> {
        available_questions(&self.kb, &self.constraints).unwrap_or_default()
    }

    pub fn answers_for(&self, question_id: &str) -> Result<Vec<String>, QaError> {
        answers_for(&self.kb, &self.constraints, question_id)
    }

    pub fn apply_answer(&self, question_id: &str, answer: &str) -> Result<QaSession, QaError> {
        let offered = self.answers_for(question_id)?;
        if !offered.iter().any(|a| a == answer) {
            return Err(QaError::NotOffered {
                question: question_id.to_owned(),
                answer: answer.to_owned(),
            });
        }
        let mut next = self.clone();
        next.constraints.push(question_id, answer)?;
        next.drop_stale_selection();
        Ok(next)
    }

    /// Undo: drops the answer to `question_id`, if any.
    pub fn remove_answer(&self, question_id: &str) -> QaSession {
        let mut next = self.clone();
        next.constraints.remove(question_id);
        next
    }

    pub fn select_task(&self, task_id: &str) -> Result<QaSession, QaError> {
        if self.kb.task(task_id).is_none() {
            return Err(QaError::UnknownTask(task_id.to_owned()));
        }
        if !self.matching_tasks().iter().any(|t| t.id == task_id) {
            return Err(QaError::TaskNotMatching(task_id.to_owned()));
        }
        let mut next = self.clone();
        next.selected_task = Some(task_id.to_owned());
        Ok(next)
    }

    fn drop_stale_selection(&mut self) {
        if let Some(id) = &self.selected_task {
            if !self.matching_tasks().iter().any(|t| &t.id == id) {
                self.selected_task = None;
            }
        }
    }
}
