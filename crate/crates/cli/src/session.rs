//! Persistent CLI session.
//!
//! The simulated world is fully determined by its seed, parameters and the
//! sequence of user actions, so a session is stored as that journal and
//! rebuilt by replay on every invocation. The client store and the event
//! log are also written out for inspection.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smartotps::crypto::Digest;
use smartotps::ledger::TxId;
use smartotps::payload::OpType;
use smartotps::protocols::{Mode, ProtocolError, World, WorldConfig};
use smartotps::TreeParams;

const SESSION_FILE: &str = "session.json";
const EVENTS_FILE: &str = "events.log";
const CLIENT_DIR: &str = "client";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Action {
    Fund { amount: u64 },
    Init { op_type: OpType, addr: String, param: u64 },
    Confirm { op_id: u64, otp: Digest },
    Run { op_type: OpType, addr: String, param: u64 },
    SubtreeNext,
    RootRotate { mode: Mode },
    Mine { blocks: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Entry {
    #[serde(flatten)]
    pub action: Action,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Session {
    pub run_seed: u64,
    pub params: TreeParams,
    pub mode: Mode,
    pub depth: u64,
    pub journal: Vec<Entry>,
}

/// What an action produced, for printing.
pub enum Effect {
    Tx(TxId),
    Op { op_id: u64, tx: TxId },
    Confirmed { op_id: u64, tx: TxId, front_run: bool },
    Height(u64),
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("no session in {0}; run `bootstrap` first")]
    Missing(PathBuf),
    #[error("session already exists in {0}")]
    Exists(PathBuf),
    #[error("state: {0}")]
    State(String),
    #[error("replay diverged at journal entry {0}")]
    Diverged(usize),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

fn state_err(e: impl std::fmt::Display) -> SessionError {
    SessionError::State(e.to_string())
}

impl Session {
    pub fn config(&self) -> WorldConfig {
        WorldConfig::new(self.run_seed, self.params)
            .mode(self.mode)
            .depth(self.depth)
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(SESSION_FILE).exists()
    }

    pub fn load(dir: &Path) -> Result<Session, SessionError> {
        let path = dir.join(SESSION_FILE);
        if !path.exists() {
            return Err(SessionError::Missing(dir.to_path_buf()));
        }
        serde_json::from_str(&fs::read_to_string(path).map_err(state_err)?).map_err(state_err)
    }

    /// Bootstrap a fresh world; the session is only written if it deploys.
    pub fn create(dir: &Path, session: Session) -> Result<(Session, World), SessionError> {
        if Self::exists(dir) {
            return Err(SessionError::Exists(dir.to_path_buf()));
        }
        let world = World::bootstrap(session.config())?;
        session.save(dir, &world)?;
        Ok((session, world))
    }

    /// Rebuild the world from the journal.
    pub fn replay(&self) -> Result<World, SessionError> {
        let mut world = World::bootstrap(self.config())?;
        for (i, e) in self.journal.iter().enumerate() {
            if apply(&mut world, &e.action).is_ok() != e.ok {
                return Err(SessionError::Diverged(i));
            }
        }
        Ok(world)
    }

    /// Replay, run `action`, record it and persist. Failed actions are
    /// recorded too, since they leave reverted transactions on the ledger.
    pub fn perform(dir: &Path, action: Action) -> Result<(World, Result<Effect, ProtocolError>), SessionError> {
        let mut s = Self::load(dir)?;
        let mut world = s.replay()?;
        let result = apply(&mut world, &action);
        s.journal.push(Entry {
            action,
            ok: result.is_ok(),
        });
        s.save(dir, &world)?;
        Ok((world, result))
    }

    pub fn save(&self, dir: &Path, world: &World) -> Result<(), SessionError> {
        fs::create_dir_all(dir).map_err(state_err)?;
        let text = serde_json::to_string_pretty(self).map_err(state_err)?;
        fs::write(dir.join(SESSION_FILE), text + "\n").map_err(state_err)?;
        fs::write(dir.join(EVENTS_FILE), world.ledger.event_log()).map_err(state_err)?;
        world.client.save(&dir.join(CLIENT_DIR)).map_err(state_err)
    }
}

pub fn apply(w: &mut World, action: &Action) -> Result<Effect, ProtocolError> {
    match action {
        Action::Fund { amount } => w.fund(*amount).map(Effect::Tx),
        Action::Init { op_type, addr, param } => {
            let (tx, op_id) = w.initiate(*op_type, addr, *param)?;
            Ok(Effect::Op { op_id, tx })
        }
        Action::Confirm { op_id, otp } => {
            let (tx, front_run) = w.confirm_with(*op_id, *otp)?;
            Ok(Effect::Confirmed {
                op_id: *op_id,
                tx,
                front_run,
            })
        }
        Action::Run { op_type, addr, param } => {
            let r = w.run_operation(*op_type, addr, *param)?;
            Ok(Effect::Confirmed {
                op_id: r.op_id,
                tx: r.confirm_tx,
                front_run: r.front_run,
            })
        }
        Action::SubtreeNext => w.run_next_subtree().map(Effect::Tx),
        Action::RootRotate { mode } => w.run_new_root(*mode).map(Effect::Tx),
        Action::Mine { blocks } => Ok(Effect::Height(w.ledger.mine_blocks(*blocks))),
    }
}
