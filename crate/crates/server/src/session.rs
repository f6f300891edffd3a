//! Session registry, cached candidate pools and on-disk snapshots.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use slicewise::dataset::{load_table, FeatureMatrix, Schema};
use slicewise::discovery::DiscoveryEngine;
use slicewise::map::{BubbleLayout, Embedding};
use slicewise::ranking::rank_raw;
use slicewise::rules::{parse_rule, Rule};
use slicewise::{Config, Metrics, Scores, Spec, Subgroup};

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Relative dataset and schema paths resolve against this directory.
    pub data_root: Option<PathBuf>,
    /// Where session snapshots are written. No persistence when unset.
    pub state_dir: Option<PathBuf>,
    /// Static client assets served under `/`.
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSource {
    pub data: PathBuf,
    pub schema: PathBuf,
}

/// One ranked result as sent to clients. Metrics are evaluation-split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupView {
    pub rank: usize,
    pub text: String,
    pub rule: Rule,
    pub metrics: Metrics,
    pub scores: Scores,
}

impl SubgroupView {
    pub fn new(rank: usize, s: &Subgroup) -> Self {
        SubgroupView {
            rank,
            text: s.rule.to_text(),
            rule: s.rule.clone(),
            metrics: s.metrics.evaluation.clone(),
            scores: s.scores.clone(),
        }
    }
}

/// Ranked discovery output plus what re-ranking needs, so weight changes
/// never touch masks or metrics.
#[derive(Debug)]
pub struct Pool {
    pub config: Config,
    pub results: Vec<Subgroup>,
    raw: Vec<Vec<Option<f64>>>,
    sizes: Vec<u32>,
    texts: Vec<String>,
}

impl Pool {
    pub fn new(config: Config, results: Vec<Subgroup>) -> Self {
        let raw = results.iter().map(|r| r.scores.raw.clone()).collect();
        let sizes = results.iter().map(|r| r.metrics.evaluation.size).collect();
        let texts = results.iter().map(|r| r.rule.to_text()).collect();
        Pool {
            config,
            results,
            raw,
            sizes,
            texts,
        }
    }

    pub fn specs(&self) -> &[Spec] {
        &self.config.specs
    }

    pub fn views(&self, offset: usize, limit: Option<usize>) -> Vec<SubgroupView> {
        let end = limit.map_or(self.results.len(), |l| (offset + l).min(self.results.len()));
        (offset.min(end)..end)
            .map(|i| SubgroupView::new(i, &self.results[i]))
            .collect()
    }

    /// Reorders the pool under new weights without modifying it.
    pub fn rerank(
        &self,
        weights: &[u8],
        offset: usize,
        limit: Option<usize>,
    ) -> ApiResult<Vec<SubgroupView>> {
        if weights.len() != self.config.specs.len() {
            return Err(ApiError::bad_request(format!(
                "expected {} weights, got {}",
                self.config.specs.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights
            .iter()
            .find(|&&w| w > slicewise::ranking::MAX_WEIGHT)
        {
            return Err(ApiError::bad_request(format!(
                "weight {w} exceeds {}",
                slicewise::ranking::MAX_WEIGHT
            )));
        }
        let (order, scores) = rank_raw(&self.raw, weights, &self.sizes, &self.texts)?;
        let end = limit.map_or(order.len(), |l| (offset + l).min(order.len()));
        Ok((offset.min(end)..end)
            .map(|rank| {
                let i = order[rank];
                let r = &self.results[i];
                SubgroupView {
                    rank,
                    text: self.texts[i].clone(),
                    rule: r.rule.clone(),
                    metrics: r.metrics.evaluation.clone(),
                    scores: scores[i].clone(),
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done { results: usize },
    Failed { error: String, code: u16 },
}

#[derive(Default)]
pub struct SessionState {
    pub pool: Option<Arc<Pool>>,
    pub last_config: Option<Config>,
    pub favorites: Vec<Rule>,
    pub embeddings: HashMap<u64, Arc<Embedding>>,
    pub layouts: HashMap<String, Arc<BubbleLayout>>,
}

pub struct Session {
    pub id: String,
    pub source: Option<DatasetSource>,
    pub engine: Arc<DiscoveryEngine>,
    pub state: RwLock<SessionState>,
    pub jobs: Mutex<Vec<JobState>>,
}

impl Session {
    pub fn matrix(&self) -> &FeatureMatrix {
        self.engine.matrix()
    }

    pub fn read(&self) -> std::sync::RwLockReadGuard<'_, SessionState> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> std::sync::RwLockWriteGuard<'_, SessionState> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn snapshot(&self) -> Snapshot {
        let st = self.read();
        Snapshot {
            id: self.id.clone(),
            source: self.source.clone(),
            config: st.last_config.clone(),
            favorites: st.favorites.iter().map(Rule::to_text).collect(),
        }
    }
}

/// Persisted session: dataset location, last discovery config and
/// favorites as rule text. The candidate pool is recomputed on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub source: Option<DatasetSource>,
    #[serde(default)]
    pub config: Option<Config>,
    #[serde(default)]
    pub favorites: Vec<String>,
}

pub struct AppState {
    pub config: ServerConfig,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        AppState {
            config,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.config.data_root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn fresh_id(&self) -> String {
        let sessions = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        loop {
            let id = format!("{:016x}", rand::random::<u64>());
            if !sessions.contains_key(&id) {
                return id;
            }
        }
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id:?}")))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    pub fn remove(&self, id: &str) -> ApiResult<()> {
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id:?}")))?;
        if let Some(dir) = &self.config.state_dir {
            let _ = std::fs::remove_file(dir.join(format!("{id}.json")));
        }
        Ok(())
    }

    /// Loads a dataset from disk (blocking).
    pub fn load(&self, source: &DatasetSource) -> ApiResult<FeatureMatrix> {
        let data = self.resolve(&source.data);
        let schema = self.resolve(&source.schema);
        for p in [&data, &schema] {
            if !p.is_file() {
                return Err(ApiError::bad_request(format!(
                    "no such file: {}",
                    p.display()
                )));
            }
        }
        let schema = Schema::from_path(&schema)?;
        Ok(load_table(&data, &schema)?)
    }

    /// Registers a session over an already loaded matrix (blocking: builds
    /// the split indexes).
    pub fn insert(
        &self,
        matrix: FeatureMatrix,
        source: Option<DatasetSource>,
    ) -> ApiResult<Arc<Session>> {
        let id = self.fresh_id();
        self.insert_with_id(id, matrix, source)
    }

    fn insert_with_id(
        &self,
        id: String,
        matrix: FeatureMatrix,
        source: Option<DatasetSource>,
    ) -> ApiResult<Arc<Session>> {
        let session = Arc::new(Session {
            id: id.clone(),
            source,
            engine: Arc::new(DiscoveryEngine::new(matrix)?),
            state: RwLock::new(SessionState::default()),
            jobs: Mutex::new(Vec::new()),
        });
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, session.clone());
        self.persist(&session);
        Ok(session)
    }

    /// Writes the session snapshot when a state directory is configured.
    /// Failures are logged; the in-memory state stays authoritative.
    pub fn persist(&self, session: &Session) {
        let Some(dir) = &self.config.state_dir else {
            return;
        };
        let snap = session.snapshot();
        let write = || -> std::io::Result<()> {
            std::fs::create_dir_all(dir)?;
            let tmp = dir.join(format!("{}.json.tmp", snap.id));
            std::fs::write(&tmp, serde_json::to_vec_pretty(&snap)?)?;
            std::fs::rename(tmp, dir.join(format!("{}.json", snap.id)))
        };
        if let Err(e) = write() {
            log::warn!("could not persist session {}: {e}", snap.id);
        }
    }

    /// Reloads every snapshot in the state directory. Returns the restored
    /// session ids; unreadable snapshots are skipped with a warning.
    pub fn restore(&self) -> Vec<String> {
        let Some(dir) = self.config.state_dir.clone() else {
            return Vec::new();
        };
        let Ok(entries) = std::fs::read_dir(&dir) else {
            return Vec::new();
        };
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        let mut restored = Vec::new();
        for path in paths {
            match self.restore_one(&path) {
                Ok(id) => restored.push(id),
                Err(e) => log::warn!("skipping snapshot {}: {}", path.display(), e.message),
            }
        }
        restored
    }

    fn restore_one(&self, path: &Path) -> ApiResult<String> {
        let text = std::fs::read_to_string(path).map_err(|e| ApiError::internal(e.to_string()))?;
        let snap: Snapshot =
            serde_json::from_str(&text).map_err(|e| ApiError::internal(e.to_string()))?;
        let source = snap
            .source
            .clone()
            .ok_or_else(|| ApiError::bad_request("snapshot has no dataset source"))?;
        let matrix = self.load(&source)?;
        let favorites = snap
            .favorites
            .iter()
            .map(|t| parse_rule(t, &matrix))
            .collect::<Result<Vec<_>, _>>()?;
        let session = self.insert_with_id(snap.id.clone(), matrix, Some(source))?;
        {
            let mut st = session.write();
            st.favorites = favorites;
            st.last_config = snap.config;
        }
        self.persist(&session);
        Ok(snap.id)
    }
}
