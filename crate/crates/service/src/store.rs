//! On-disk election state: one directory per election holding
//! `config.json`, `meta.json` and the append-only `ballots.jsonl`.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pbvote_core::comparisons::ComparisonMatrix;
use pbvote_core::{Ballot, Election, ElectionConfig};
use serde::{Deserialize, Serialize};
use tokio::sync::RwLock;

use crate::error::ServiceError;

const CONFIG_FILE: &str = "config.json";
const META_FILE: &str = "meta.json";
const LOG_FILE: &str = "ballots.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Draft,
    Open,
    Closed,
}

impl Status {
    fn can_become(self, next: Status) -> bool {
        matches!(
            (self, next),
            (Status::Draft, Status::Open) | (Status::Open, Status::Closed)
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub id: String,
    pub status: Status,
    pub pair_seed: u64,
    /// Serve results before the election closes.
    pub live_results: bool,
    pub created_at: String,
    pub updated_at: String,
}

/// One line of the ballot log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub received_at: String,
    pub ballot: Ballot,
}

pub struct ElectionState {
    pub config: ElectionConfig,
    pub election: Election,
    pub meta: Meta,
    /// Every accepted submission, superseded ones included.
    pub log: Vec<LogEntry>,
    /// Latest log position per (voter, ballot format).
    current: BTreeMap<(String, &'static str), usize>,
    pub comparisons: ComparisonMatrix,
    dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub election_id: String,
    pub voter_id: String,
    pub format: String,
    pub seq: u64,
    pub received_at: String,
    /// True when this submission superseded an earlier one of the same format.
    pub replaced: bool,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn write_atomic(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), ServiceError> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer_pretty(&mut tmp, value)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}

impl ElectionState {
    /// Effective ballots: the latest per (voter, format), in log order.
    pub fn ballots(&self) -> Vec<Ballot> {
        let mut idx: Vec<usize> = self.current.values().copied().collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| self.log[i].ballot.clone()).collect()
    }

    fn apply(&mut self, entry: LogEntry) -> bool {
        let key = (entry.ballot.voter_id.clone(), entry.ballot.payload.format_name());
        self.log.push(entry);
        let replaced = self.current.insert(key, self.log.len() - 1).is_some();
        let latest = &self.log[self.log.len() - 1].ballot;
        if replaced {
            self.rebuild_comparisons();
        } else if latest.payload.format_name() == "pairwise" {
            let pairs = self.election.pairwise_vote(latest).expect("validated ballot");
            for (w, l) in pairs {
                let (w, l) = (self.election.id(w), self.election.id(l));
                self.comparisons
                    .record_comparison([w, l], w)
                    .expect("validated ballot");
            }
        }
        replaced
    }

    fn rebuild_comparisons(&mut self) {
        // Ballots in the log were validated on entry.
        self.comparisons = ComparisonMatrix::from_ballots(&self.election, &self.ballots())
            .expect("logged ballots are valid");
    }

    fn save_meta(&self) -> Result<(), ServiceError> {
        write_atomic(&self.dir, META_FILE, &self.meta)
    }

    pub fn set_status(&mut self, next: Status) -> Result<(), ServiceError> {
        if self.meta.status == next {
            return Ok(());
        }
        if !self.meta.status.can_become(next) {
            return Err(ServiceError::Conflict(format!(
                "cannot move from {:?} to {:?}",
                self.meta.status, next
            )));
        }
        let previous = self.meta.clone();
        self.meta.status = next;
        self.meta.updated_at = now();
        if let Err(e) = self.save_meta() {
            self.meta = previous;
            return Err(e);
        }
        Ok(())
    }

    /// Validates, appends durably, then applies the ballot.
    pub fn submit(&mut self, ballot: Ballot) -> Result<Receipt, ServiceError> {
        if self.meta.status != Status::Open {
            return Err(ServiceError::Conflict(format!(
                "election is {:?}; ballots are accepted only while open",
                self.meta.status
            )));
        }
        self.election.validate_ballot(&ballot)?;
        let entry = LogEntry {
            seq: self.log.last().map_or(1, |e| e.seq + 1),
            received_at: now(),
            ballot,
        };
        let mut line = serde_json::to_vec(&entry)?;
        line.push(b'\n');
        let mut file = OpenOptions::new().append(true).create(true).open(self.dir.join(LOG_FILE))?;
        file.write_all(&line)?;
        file.sync_data()?;

        let receipt = Receipt {
            election_id: self.meta.id.clone(),
            voter_id: entry.ballot.voter_id.clone(),
            format: entry.ballot.payload.format_name().to_owned(),
            seq: entry.seq,
            received_at: entry.received_at.clone(),
            replaced: false,
        };
        let replaced = self.apply(entry);
        if replaced {
            tracing::info!(
                election = %receipt.election_id,
                voter = %receipt.voter_id,
                format = %receipt.format,
                seq = receipt.seq,
                "ballot replaced by resubmission"
            );
        }
        Ok(Receipt { replaced, ..receipt })
    }

    fn load(dir: PathBuf) -> Result<Self, ServiceError> {
        let config: ElectionConfig = serde_json::from_reader(File::open(dir.join(CONFIG_FILE))?)?;
        let meta: Meta = serde_json::from_reader(File::open(dir.join(META_FILE))?)?;
        let election = Election::new(config.clone())?;
        let mut state = ElectionState {
            comparisons: ComparisonMatrix::for_election(&election),
            config,
            election,
            meta,
            log: Vec::new(),
            current: BTreeMap::new(),
            dir,
        };
        let path = state.dir.join(LOG_FILE);
        if path.exists() {
            let text = fs::read_to_string(&path)?;
            let mut valid = 0usize;
            for line in text.split_inclusive('\n') {
                let entry = match serde_json::from_str::<LogEntry>(line.trim_end()) {
                    Ok(entry) if line.ends_with('\n') => entry,
                    // A torn final line was never acknowledged; drop it so
                    // later appends start on a clean line.
                    _ if valid + line.len() == text.len() => {
                        tracing::warn!(path = %path.display(), "truncating torn log tail");
                        OpenOptions::new().write(true).open(&path)?.set_len(valid as u64)?;
                        break;
                    }
                    Ok(_) => unreachable!("only the last line can lack a newline"),
                    Err(e) => return Err(e.into()),
                };
                valid += line.len();
                state.election.validate_ballot(&entry.ballot)?;
                let key = (entry.ballot.voter_id.clone(), entry.ballot.payload.format_name());
                state.log.push(entry);
                state.current.insert(key, state.log.len() - 1);
            }
        }
        state.rebuild_comparisons();
        Ok(state)
    }
}

pub type Handle = Arc<RwLock<ElectionState>>;

/// All elections under one data directory.
pub struct Store {
    root: PathBuf,
    elections: RwLock<HashMap<String, Handle>>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CreateOptions {
    pub pair_seed: Option<u64>,
    pub live_results: bool,
}

impl Store {
    /// Opens `root`, replaying every election found in it.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut elections = HashMap::new();
        for entry in fs::read_dir(&root)? {
            let dir = entry?.path();
            if !dir.join(META_FILE).is_file() {
                continue;
            }
            let state = ElectionState::load(dir)?;
            elections.insert(state.meta.id.clone(), Arc::new(RwLock::new(state)));
        }
        tracing::info!(root = %root.display(), elections = elections.len(), "store opened");
        Ok(Store {
            root,
            elections: RwLock::new(elections),
        })
    }

    pub async fn create(
        &self,
        config: ElectionConfig,
        opts: CreateOptions,
    ) -> Result<(String, Handle), ServiceError> {
        let election = Election::new(config.clone())?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.root.join(&id);
        fs::create_dir(&dir)?;
        let stamp = now();
        let meta = Meta {
            id: id.clone(),
            status: Status::Draft,
            pair_seed: opts.pair_seed.unwrap_or_else(rand::random),
            live_results: opts.live_results,
            created_at: stamp.clone(),
            updated_at: stamp,
        };
        write_atomic(&dir, CONFIG_FILE, &config)?;
        File::create(dir.join(LOG_FILE))?.sync_all()?;
        // meta.json last: its presence marks the directory complete.
        write_atomic(&dir, META_FILE, &meta)?;
        let state = ElectionState {
            comparisons: ComparisonMatrix::for_election(&election),
            config,
            election,
            meta,
            log: Vec::new(),
            current: BTreeMap::new(),
            dir,
        };
        let handle = Arc::new(RwLock::new(state));
        self.elections.write().await.insert(id.clone(), handle.clone());
        Ok((id, handle))
    }

    pub async fn get(&self, id: &str) -> Result<Handle, ServiceError> {
        self.elections
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no election `{id}`")))
    }
}
