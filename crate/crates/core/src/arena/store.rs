//! Persistent arena store: append-only NDJSON event log plus a JSON snapshot.
//!
//! Layout of the store directory:
//! - `events.ndjson`: one [`Event`] per line, in sequence order.
//! - `snapshot.json`: the [`ArenaState`] after some prefix of the log.
//!
//! Opening loads the snapshot and replays the log entries after it. All
//! writes go through one mutex; readers clone an `Arc` of the latest state.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};

use super::session::{ArenaState, Command, Event};
use super::trueskill::TrueSkillParams;
use super::ArenaError;

const EVENTS_FILE: &str = "events.ndjson";
const SNAPSHOT_FILE: &str = "snapshot.json";

type Clock = dyn Fn() -> u64 + Send + Sync;

fn system_clock() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ArenaError + '_ {
    move |e| ArenaError::Io(format!("{}: {e}", path.display()))
}

pub struct ArenaStore {
    dir: Option<PathBuf>,
    log: Mutex<Option<File>>,
    state: RwLock<Arc<ArenaState>>,
    clock: Box<Clock>,
}

impl std::fmt::Debug for ArenaStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ArenaStore")
            .field("dir", &self.dir)
            .field("events", &self.snapshot().events)
            .finish()
    }
}

impl ArenaStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory(seed: u64, params: TrueSkillParams) -> Self {
        Self {
            dir: None,
            log: Mutex::new(None),
            state: RwLock::new(Arc::new(ArenaState::new(seed, params))),
            clock: Box::new(system_clock),
        }
    }

    /// Opens or creates a store in `dir`. `seed` and `params` only apply to a
    /// new store; an existing one keeps the values it was created with.
    pub fn open(dir: impl AsRef<Path>, seed: u64, params: TrueSkillParams) -> Result<Self, ArenaError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut state = if snap_path.exists() {
            let text = std::fs::read_to_string(&snap_path).map_err(io_err(&snap_path))?;
            serde_json::from_str(&text).map_err(|e| ArenaError::Corrupt {
                line: 0,
                message: format!("snapshot: {e}"),
            })?
        } else {
            ArenaState::new(seed, params)
        };
        let log_path = dir.join(EVENTS_FILE);
        if log_path.exists() {
            let text = std::fs::read_to_string(&log_path).map_err(io_err(&log_path))?;
            let mut offset = 0;
            for (i, line) in text.split_inclusive('\n').enumerate() {
                let start = offset;
                offset += line.len();
                if line.trim().is_empty() {
                    continue;
                }
                let event: Event = match serde_json::from_str(line) {
                    Ok(e) => e,
                    // A torn final write from a crash: cut it off so later appends stay well-formed.
                    Err(e) if offset == text.len() && !line.ends_with('\n') => {
                        log::warn!("dropping incomplete final event log line: {e}");
                        let f = OpenOptions::new().write(true).open(&log_path).map_err(io_err(&log_path))?;
                        f.set_len(start as u64).map_err(io_err(&log_path))?;
                        break;
                    }
                    Err(e) => {
                        return Err(ArenaError::Corrupt {
                            line: i + 1,
                            message: e.to_string(),
                        })
                    }
                };
                if event.seq <= state.events {
                    continue;
                }
                state.apply(&event).map_err(|e| ArenaError::Corrupt {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            }
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        let store = Self {
            dir: Some(dir),
            log: Mutex::new(Some(log)),
            state: RwLock::new(Arc::new(state)),
            clock: Box::new(system_clock),
        };
        if !snap_path.exists() {
            store.write_snapshot()?;
        }
        Ok(store)
    }

    /// Replaces the wall clock used to timestamp events.
    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Current state; cheap to call and never blocks on writers for long.
    pub fn snapshot(&self) -> Arc<ArenaState> {
        self.state.read().clone()
    }

    /// Validates and records `command`. Returns the appended event, or `None`
    /// when the command repeats recorded state.
    pub fn submit(&self, command: Command) -> Result<Option<Event>, ArenaError> {
        let mut log = self.log.lock();
        let current = self.snapshot();
        let Some(kind) = current.plan(command)? else {
            return Ok(None);
        };
        let event = Event {
            seq: current.events + 1,
            at: (self.clock)(),
            kind,
        };
        let mut next = (*current).clone();
        next.apply(&event)?;
        if let Some(file) = log.as_mut() {
            let mut line = serde_json::to_string(&event).expect("event serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| ArenaError::Io(format!("appending event: {e}")))?;
        }
        *self.state.write() = Arc::new(next);
        Ok(Some(event))
    }

    /// Writes the current state to `snapshot.json` atomically.
    pub fn write_snapshot(&self) -> Result<(), ArenaError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let _guard = self.log.lock();
        let state = self.snapshot();
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let path = dir.join(SNAPSHOT_FILE);
        let text = serde_json::to_string_pretty(&*state).expect("state serializes");
        std::fs::write(&tmp, text).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io_err(&path))?;
        Ok(())
    }
}
