//! Session store, role tokens and per-session event channels.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use elicit_core::session::Session;
use elicit_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{broadcast, Mutex, RwLock};

use crate::jobs::Jobs;

const EVENT_BUFFER: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokens {
    pub facilitator: String,
    /// Expert id to token.
    pub experts: BTreeMap<String, String>,
}

impl Tokens {
    fn issue(session: &Session) -> Tokens {
        let token = || uuid::Uuid::new_v4().simple().to_string();
        Tokens { facilitator: token(), experts: session.experts.iter().map(|e| (e.id.clone(), token())).collect() }
    }

    pub fn role(&self, token: &str) -> Option<Role> {
        if token == self.facilitator {
            return Some(Role::Facilitator);
        }
        self.experts.iter().find(|(_, t)| t.as_str() == token).map(|(id, _)| Role::Expert(id.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Role {
    Facilitator,
    Expert(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Audience {
    All,
    Facilitator,
    /// The facilitator and one expert.
    Expert(String),
}

impl Audience {
    pub fn includes(&self, role: &Role) -> bool {
        match (self, role) {
            (_, Role::Facilitator) | (Audience::All, _) => true,
            (Audience::Expert(a), Role::Expert(b)) => a == b,
            (Audience::Facilitator, Role::Expert(_)) => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    pub seq: u64,
    pub kind: &'static str,
    pub audience: Audience,
    pub data: Value,
}

/// An event produced by a mutation, before it is numbered.
pub struct PendingEvent {
    pub kind: &'static str,
    pub audience: Audience,
    pub data: Value,
}

pub struct SessionSlot {
    pub session: RwLock<Session>,
    pub tokens: Tokens,
    pub events: broadcast::Sender<Event>,
    next_seq: Mutex<u64>,
}

pub struct Store {
    dir: PathBuf,
}

impl Store {
    pub fn open(dir: &Path) -> Result<Store> {
        std::fs::create_dir_all(dir)?;
        let probe = dir.join(".write-probe");
        std::fs::write(&probe, b"")?;
        std::fs::remove_file(&probe)?;
        Ok(Store { dir: dir.to_path_buf() })
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn tokens_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.tokens.json"))
    }

    pub fn save(&self, s: &Session) -> Result<()> {
        s.save(&self.session_path(&s.id))
    }

    fn save_tokens(&self, id: &str, t: &Tokens) -> Result<()> {
        let path = self.tokens_path(id);
        let tmp = self.dir.join(format!(".{id}.tokens.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(t).expect("tokens serialize"))?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    fn load_all(&self) -> Result<Vec<(Session, Tokens)>> {
        let mut out = Vec::new();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                name.ends_with(".json") && !name.ends_with(".tokens.json") && !name.starts_with('.')
            })
            .collect();
        entries.sort();
        for path in entries {
            let session = Session::load(&path)?;
            let text = std::fs::read_to_string(self.tokens_path(&session.id))?;
            let tokens: Tokens = serde_json::from_str(&text)
                .map_err(|e| Error::Schema(format!("corrupted token file for {}: {e}", session.id)))?;
            out.push((session, tokens));
        }
        Ok(out)
    }
}

pub struct AppState {
    pub store: Store,
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    pub jobs: Jobs,
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl AppState {
    /// Open the store and load every session already in it.
    pub fn open(dir: &Path) -> Result<AppState> {
        let store = Store::open(dir)?;
        let mut sessions = HashMap::new();
        for (s, tokens) in store.load_all()? {
            sessions.insert(s.id.clone(), Arc::new(SessionSlot::new(s, tokens)));
        }
        Ok(AppState { store, sessions: RwLock::new(sessions), jobs: Jobs::default() })
    }

    pub async fn insert(&self, session: Session) -> Result<(Arc<SessionSlot>, Tokens)> {
        if !valid_session_id(&session.id) {
            return Err(Error::Config("session id must be 1-64 letters, digits, '-' or '_'".into()));
        }
        let mut map = self.sessions.write().await;
        if map.contains_key(&session.id) {
            return Err(Error::Config(format!("session '{}' already exists", session.id)));
        }
        let tokens = Tokens::issue(&session);
        self.store.save_tokens(&session.id, &tokens)?;
        self.store.save(&session)?;
        let slot = Arc::new(SessionSlot::new(session.clone(), tokens.clone()));
        map.insert(session.id.clone(), slot.clone());
        Ok((slot, tokens))
    }

    pub async fn get(&self, id: &str) -> Result<Arc<SessionSlot>> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| Error::NotFound(format!("no session with id '{id}'")))
    }

    /// Write every session to the store.
    pub async fn flush(&self) -> Result<()> {
        let slots: Vec<Arc<SessionSlot>> = self.sessions.read().await.values().cloned().collect();
        for slot in slots {
            self.store.save(&*slot.session.read().await)?;
        }
        Ok(())
    }

    /// Apply `f` to a copy of the session; on success persist it, swap it in
    /// and publish the resulting events. Writers to one session are
    /// serialized by the session's write lock.
    pub async fn mutate<T>(
        &self,
        slot: &SessionSlot,
        f: impl FnOnce(&mut Session) -> Result<(T, Vec<PendingEvent>)>,
    ) -> Result<T> {
        let mut guard = slot.session.write().await;
        let mut draft = guard.clone();
        let (out, events) = f(&mut draft)?;
        self.store.save(&draft)?;
        *guard = draft;
        let mut seq = slot.next_seq.lock().await;
        for e in events {
            *seq += 1;
            // No receivers is not an error.
            let _ = slot.events.send(Event { seq: *seq, kind: e.kind, audience: e.audience, data: e.data });
        }
        Ok(out)
    }
}

impl SessionSlot {
    fn new(session: Session, tokens: Tokens) -> SessionSlot {
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        SessionSlot { session: RwLock::new(session), tokens, events, next_seq: Mutex::new(0) }
    }

    pub fn role(&self, token: Option<&str>) -> Result<Role> {
        let token = token.ok_or_else(|| Error::Auth("missing bearer token".into()))?;
        self.tokens.role(token).ok_or_else(|| Error::Auth("token is not valid for this session".into()))
    }

    pub fn require_facilitator(&self, token: Option<&str>) -> Result<()> {
        match self.role(token)? {
            Role::Facilitator => Ok(()),
            Role::Expert(_) => Err(Error::Auth("this operation needs the facilitator token".into())),
        }
    }
}
