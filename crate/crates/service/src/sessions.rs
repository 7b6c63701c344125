//! Pre-issued trainer session tokens.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crowdshape_core::TrainerId;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    pub token: String,
    pub trainer_id: TrainerId,
}

/// Token → trainer lookup. Tokens and trainer ids are both unique.
#[derive(Debug, Clone, Default)]
pub struct SessionTable {
    by_token: HashMap<String, TrainerId>,
}

impl SessionTable {
    pub fn new(sessions: Vec<Session>) -> Result<Self, ServiceError> {
        let mut by_token = HashMap::new();
        let mut ids = BTreeSet::new();
        for s in sessions {
            if s.token.is_empty() {
                return Err(ServiceError::Sessions("empty session token".into()));
            }
            if !ids.insert(s.trainer_id) {
                return Err(ServiceError::Sessions(format!(
                    "trainer {} has more than one token",
                    s.trainer_id.0
                )));
            }
            if by_token.insert(s.token.clone(), s.trainer_id).is_some() {
                return Err(ServiceError::Sessions(format!("token {:?} is listed twice", s.token)));
            }
        }
        Ok(Self { by_token })
    }

    /// Reads a JSON array of `{"token": …, "trainer_id": …}` objects.
    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ServiceError::Sessions(format!("{}: {e}", path.display())))?;
        let sessions: Vec<Session> =
            serde_json::from_str(&text).map_err(|e| ServiceError::Sessions(format!("{}: {e}", path.display())))?;
        Self::new(sessions)
    }

    pub fn trainer(&self, token: &str) -> Option<TrainerId> {
        self.by_token.get(token).copied()
    }

    pub fn trainers(&self) -> BTreeSet<TrainerId> {
        self.by_token.values().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.by_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_token.is_empty()
    }
}
