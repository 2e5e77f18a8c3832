use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use senscomp_core::cost::{Ranking, WeightVector};
use senscomp_core::{ComposeOutcome, KnowledgeBase, QaSession};

/// Per-caller state. Everything cached here was computed against `qa.kb()`,
/// the snapshot pinned when the session was created.
#[derive(Debug, Clone)]
pub struct ServerSession {
    pub qa: QaSession,
    pub outcome: Option<Arc<ComposeOutcome>>,
    pub weights: Option<WeightVector>,
    pub ranking: Option<Ranking>,
    pub chosen_solution: Option<String>,
    pub expires: Instant,
}

impl ServerSession {
    pub fn new(kb: Arc<KnowledgeBase>, ttl: Duration) -> Self {
        Self {
            qa: QaSession::new(kb),
            outcome: None,
            weights: None,
            ranking: None,
            chosen_solution: None,
            expires: Instant::now() + ttl,
        }
    }

    pub fn kb(&self) -> &Arc<KnowledgeBase> {
        self.qa.kb()
    }

    /// Drops everything derived from the selected task.
    pub fn clear_results(&mut self) {
        self.outcome = None;
        self.ranking = None;
        self.chosen_solution = None;
    }
}

/// Sessions expire `ttl` after their last use and are purged lazily.
#[derive(Debug)]
pub struct SessionStore {
    ttl: Duration,
    sessions: Mutex<HashMap<String, ServerSession>>,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            ttl,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    fn purge(map: &mut HashMap<String, ServerSession>, now: Instant) {
        map.retain(|_, s| s.expires > now);
    }

    pub fn create(&self, kb: Arc<KnowledgeBase>) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let mut map = self.sessions.lock().expect("session lock");
        Self::purge(&mut map, Instant::now());
        map.insert(id.clone(), ServerSession::new(kb, self.ttl));
        id
    }

    /// A copy of the live session, refreshing its expiry.
    pub fn get(&self, id: &str) -> Option<ServerSession> {
        let now = Instant::now();
        let mut map = self.sessions.lock().expect("session lock");
        Self::purge(&mut map, now);
        let s = map.get_mut(id)?;
        s.expires = now + self.ttl;
        Some(s.clone())
    }

    /// Stores an updated copy unless the session expired meanwhile.
    pub fn put(&self, id: &str, session: ServerSession) -> bool {
        let mut map = self.sessions.lock().expect("session lock");
        match map.get_mut(id) {
            Some(slot) => {
                *slot = session;
                true
            }
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        let mut map = self.sessions.lock().expect("session lock");
        Self::purge(&mut map, Instant::now());
        map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
