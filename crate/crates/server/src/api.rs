//! Request handlers and wire types.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use slicewise::bitset::BitSet;
use slicewise::dataset::OutcomeVector;
use slicewise::discovery::targeted_discover;
use slicewise::map::{
    build_layout, distinguishing_feature, embed, BubbleLayout, DistinguishingFeature, Embedding,
    MapOptions,
};
use slicewise::rules::{edit_rule, parse_rule, EditableRule, Mask, Rule, RuleEdit};
use slicewise::{Config, Metrics};

use crate::error::{ApiError, ApiResult};
use crate::session::{AppState, DatasetSource, JobState, Pool, Session, SubgroupView};

type AppRef = State<Arc<AppState>>;

const LAYOUT_CACHE: usize = 32;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub data: PathBuf,
    pub schema: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OutcomeInfo {
    pub name: String,
    pub kind: String,
    /// Evaluation-split positive rate or mean.
    pub base: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub source: Option<DatasetSource>,
    pub n_rows: usize,
    pub discovery_rows: usize,
    pub evaluation_rows: usize,
    pub features: Vec<FeatureInfo>,
    pub outcomes: Vec<OutcomeInfo>,
    pub results: usize,
    pub favorites: usize,
}

fn info(s: &Session) -> SessionInfo {
    let m = s.matrix();
    let eval = m.split().evaluation_rows();
    let st = s.read();
    SessionInfo {
        id: s.id.clone(),
        source: s.source.clone(),
        n_rows: m.n_rows(),
        discovery_rows: m.split().discovery_rows().len(),
        evaluation_rows: eval.len(),
        features: m
            .features()
            .iter()
            .map(|c| FeatureInfo {
                name: c.name.clone(),
                values: c.vocabulary.clone(),
            })
            .collect(),
        outcomes: m
            .outcomes()
            .iter()
            .map(|(name, o)| OutcomeInfo {
                name: name.clone(),
                kind: if o.is_binary() {
                    "binary"
                } else {
                    "continuous"
                }
                .into(),
                base: base_rate(o, eval),
            })
            .collect(),
        results: st.pool.as_ref().map_or(0, |p| p.results.len()),
        favorites: st.favorites.len(),
    }
}

pub async fn create_session(
    State(app): AppRef,
    Json(req): Json<CreateSession>,
) -> ApiResult<Response> {
    let source = DatasetSource {
        data: req.data,
        schema: req.schema,
    };
    let app2 = app.clone();
    let session = blocking(move || {
        let m = app2.load(&source)?;
        app2.insert(m, Some(source))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(info(&session))).into_response())
}

pub async fn list_sessions(State(app): AppRef) -> Json<Vec<String>> {
    Json(app.ids())
}

pub async fn session_info(
    State(app): AppRef,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionInfo>> {
    Ok(Json(info(&*app.get(&id)?)))
}

pub async fn delete_session(State(app): AppRef, Path(id): Path<String>) -> ApiResult<StatusCode> {
    app.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
pub struct DiscoverRequest {
    #[serde(flatten)]
    pub config: Config,
    /// Run as a background job and answer with its id.
    #[serde(default, rename = "async")]
    pub background: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DiscoverResponse {
    pub config: String,
    pub seed: u64,
    pub results: Vec<SubgroupView>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job: usize,
}

fn run_discovery(app: &AppState, session: &Session, config: Config) -> ApiResult<Arc<Pool>> {
    let results = session.engine.discover(&config)?;
    let pool = Arc::new(Pool::new(config.clone(), results));
    {
        let mut st = session.write();
        st.pool = Some(pool.clone());
        st.last_config = Some(config);
    }
    app.persist(session);
    Ok(pool)
}

pub async fn discover(
    State(app): AppRef,
    Path(id): Path<String>,
    Json(req): Json<DiscoverRequest>,
) -> ApiResult<Response> {
    let session = app.get(&id)?;
    let config = req.config;
    config.validate(session.matrix())?;
    if req.background {
        let job = {
            let mut jobs = session.jobs.lock().unwrap_or_else(|e| e.into_inner());
            jobs.push(JobState::Running);
            jobs.len() - 1
        };
        let (app2, s2) = (app.clone(), session.clone());
        tokio::task::spawn_blocking(move || {
            let outcome = match run_discovery(&app2, &s2, config) {
                Ok(pool) => JobState::Done {
                    results: pool.results.len(),
                },
                Err(e) => JobState::Failed {
                    error: e.message,
                    code: e.status.as_u16(),
                },
            };
            s2.jobs.lock().unwrap_or_else(|e| e.into_inner())[job] = outcome;
        });
        return Ok((StatusCode::ACCEPTED, Json(JobAccepted { job })).into_response());
    }
    let s2 = session.clone();
    let pool = blocking(move || run_discovery(&app, &s2, config)).await?;
    Ok(Json(DiscoverResponse {
        config: pool.config.echo(),
        seed: pool.config.seed,
        results: pool.views(0, None),
    })
    .into_response())
}

pub async fn job_status(
    State(app): AppRef,
    Path((id, job)): Path<(String, usize)>,
) -> ApiResult<Json<JobState>> {
    let session = app.get(&id)?;
    let jobs = session.jobs.lock().unwrap_or_else(|e| e.into_inner());
    jobs.get(job)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {job}")))
}

#[derive(Debug, Default, Deserialize)]
pub struct Page {
    #[serde(default)]
    pub offset: usize,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResultsResponse {
    pub total: usize,
    pub results: Vec<SubgroupView>,
}

fn current_pool(session: &Session) -> ApiResult<Arc<Pool>> {
    session
        .read()
        .pool
        .clone()
        .ok_or_else(|| ApiError::conflict("no discovery results yet"))
}

pub async fn results(
    State(app): AppRef,
    Path(id): Path<String>,
    Query(page): Query<Page>,
) -> ApiResult<Json<ResultsResponse>> {
    let pool = current_pool(&*app.get(&id)?)?;
    Ok(Json(ResultsResponse {
        total: pool.results.len(),
        results: pool.views(page.offset, page.limit),
    }))
}

#[derive(Debug, Deserialize)]
pub struct RerankRequest {
    pub weights: Vec<u8>,
    #[serde(default)]
    pub offset: usize,
    pub limit: Option<usize>,
}

pub async fn rerank(
    State(app): AppRef,
    Path(id): Path<String>,
    Json(req): Json<RerankRequest>,
) -> ApiResult<Json<ResultsResponse>> {
    let pool = current_pool(&*app.get(&id)?)?;
    Ok(Json(ResultsResponse {
        total: pool.results.len(),
        results: pool.rerank(&req.weights, req.offset, req.limit)?,
    }))
}

#[derive(Debug, Deserialize)]
pub struct EvaluateRequest {
    pub rule: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RuleMetrics {
    pub text: String,
    pub rule: Rule,
    #[serde(default)]
    pub disabled: BTreeMap<String, BTreeSet<String>>,
    pub metrics: Metrics,
}

fn evaluate_metrics(session: &Session, rule: &Rule) -> ApiResult<Metrics> {
    Ok(session
        .engine
        .evaluate_rule::<f64>(rule)?
        .metrics
        .evaluation)
}

pub async fn evaluate(
    State(app): AppRef,
    Path(id): Path<String>,
    Json(req): Json<EvaluateRequest>,
) -> ApiResult<Json<RuleMetrics>> {
    let session = app.get(&id)?;
    let rule = parse_rule(&req.rule, session.matrix())?;
    blocking(move || {
        Ok(Json(RuleMetrics {
            text: rule.to_text(),
            metrics: evaluate_metrics(&session, &rule)?,
            rule,
            disabled: BTreeMap::new(),
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct EditRequest {
    pub rule: String,
    #[serde(default)]
    pub disabled: BTreeMap<String, BTreeSet<String>>,
    pub edit: RuleEdit,
}

pub async fn edit(
    State(app): AppRef,
    Path(id): Path<String>,
    Json(req): Json<EditRequest>,
) -> ApiResult<Json<RuleMetrics>> {
    let session = app.get(&id)?;
    let current = EditableRule {
        rule: parse_rule(&req.rule, session.matrix())?,
        disabled: req.disabled,
    };
    let next = edit_rule(&current, &req.edit, session.matrix())?;
    blocking(move || {
        Ok(Json(RuleMetrics {
            text: next.rule.to_text(),
            metrics: evaluate_metrics(&session, &next.rule)?,
            rule: next.rule,
            disabled: next.disabled,
        }))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
pub struct MapQuery {
    /// Comma-separated positions in the current result list.
    pub selection: Option<String>,
    pub outcome: Option<String>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
pub struct MapRequest {
    /// Rule text of each subgroup to overlay.
    #[serde(default)]
    pub rules: Vec<String>,
    pub outcome: Option<String>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
}

fn selected_rules(session: &Session, selection: Option<&str>) -> ApiResult<Vec<Rule>> {
    let Some(sel) = selection.filter(|s| !s.trim().is_empty()) else {
        return Ok(Vec::new());
    };
    let pool = current_pool(session)?;
    sel.split(',')
        .map(|t| {
            let i: usize = t
                .trim()
                .parse()
                .map_err(|_| ApiError::bad_request(format!("bad selection index {t:?}")))?;
            pool.results
                .get(i)
                .map(|r| r.rule.clone())
                .ok_or_else(|| ApiError::bad_request(format!("selection index {i} out of range")))
        })
        .collect()
}

fn default_outcome(session: &Session) -> ApiResult<String> {
    let st = session.read();
    let from_config = st
        .last_config
        .as_ref()
        .and_then(|c| c.specs.iter().find_map(|s| s.outcome.clone()));
    from_config
        .or_else(|| session.matrix().outcomes().keys().next().cloned())
        .ok_or_else(|| ApiError::bad_request("dataset has no outcome to map"))
}

fn embedding(session: &Session, seed: u64) -> ApiResult<Arc<Embedding>> {
    if let Some(e) = session.read().embeddings.get(&seed) {
        return Ok(e.clone());
    }
    let e = Arc::new(embed(session.matrix(), seed)?);
    session.write().embeddings.insert(seed, e.clone());
    Ok(e)
}

/// Cached layout for a selection signature (blocking).
fn layout(
    session: &Session,
    rules: Vec<Rule>,
    outcome: Option<String>,
    seed: Option<u64>,
    threshold: Option<f64>,
) -> ApiResult<Arc<BubbleLayout>> {
    let outcome = match outcome {
        Some(o) => o,
        None => default_outcome(session)?,
    };
    let seed = seed.unwrap_or_else(|| session.read().last_config.as_ref().map_or(0, |c| c.seed));
    let mut options = MapOptions::default();
    if let Some(t) = threshold {
        options.threshold = t;
    }
    let texts: Vec<String> = rules.iter().map(Rule::to_text).collect();
    let key = format!(
        "{outcome}\u{1f}{seed}\u{1f}{}\u{1f}{}",
        options.threshold,
        texts.join("\u{1e}")
    );
    if let Some(l) = session.read().layouts.get(&key) {
        return Ok(l.clone());
    }
    let e = embedding(session, seed)?;
    let l = Arc::new(build_layout(
        session.matrix(),
        &e,
        &outcome,
        &rules,
        &options,
    )?);
    let mut st = session.write();
    if st.layouts.len() >= LAYOUT_CACHE {
        st.layouts.clear();
    }
    st.layouts.insert(key, l.clone());
    Ok(l)
}

pub async fn map_get(
    State(app): AppRef,
    Path(id): Path<String>,
    Query(q): Query<MapQuery>,
) -> ApiResult<Json<BubbleLayout>> {
    let session = app.get(&id)?;
    let rules = selected_rules(&session, q.selection.as_deref())?;
    let l = blocking(move || layout(&session, rules, q.outcome, q.seed, q.threshold)).await?;
    Ok(Json((*l).clone()))
}

pub async fn map_post(
    State(app): AppRef,
    Path(id): Path<String>,
    Json(req): Json<MapRequest>,
) -> ApiResult<Json<BubbleLayout>> {
    let session = app.get(&id)?;
    let rules = req
        .rules
        .iter()
        .map(|t| parse_rule(t, session.matrix()))
        .collect::<Result<Vec<_>, _>>()?;
    let l = blocking(move || layout(&session, rules, req.outcome, req.seed, req.threshold)).await?;
    Ok(Json((*l).clone()))
}

#[derive(Debug, Deserialize)]
pub struct SelectionRequest {
    /// Evaluation rows picked on the map.
    pub rows: Vec<usize>,
}

#[derive(Debug, Deserialize)]
pub struct MapSearchRequest {
    pub rows: Vec<usize>,
    /// Layout the rows were picked from, as for `GET /map`.
    pub selection: Option<String>,
    pub outcome: Option<String>,
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    /// Search settings; defaults to the last discovery config.
    pub config: Option<Config>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MapSearchResponse {
    pub selection_size: usize,
    pub distinguishing: DistinguishingFeature,
    pub results: Vec<SubgroupView>,
}

fn check_rows(session: &Session, rows: &[usize]) -> ApiResult<()> {
    if rows.is_empty() {
        return Err(ApiError::conflict("selection is empty"));
    }
    let n = session.matrix().n_rows();
    if let Some(r) = rows.iter().find(|&&r| r >= n) {
        return Err(ApiError::bad_request(format!("row {r} out of range")));
    }
    Ok(())
}

pub async fn map_distinguishing(
    State(app): AppRef,
    Path(id): Path<String>,
    Json(req): Json<SelectionRequest>,
) -> ApiResult<Json<DistinguishingFeature>> {
    let session = app.get(&id)?;
    check_rows(&session, &req.rows)?;
    blocking(move || {
        let mask = Mask::from_rows(req.rows.iter().copied(), session.matrix().split());
        Ok(Json(distinguishing_feature(&mask, session.matrix())?))
    })
    .await
}

/// Targeted search from a map selection. The picked evaluation rows are
/// widened by the discovery rows sharing their bubbles, which serve as
/// search sources.
pub async fn map_search(
    State(app): AppRef,
    Path(id): Path<String>,
    Json(req): Json<MapSearchRequest>,
) -> ApiResult<Json<MapSearchResponse>> {
    let session = app.get(&id)?;
    check_rows(&session, &req.rows)?;
    let rules = selected_rules(&session, req.selection.as_deref())?;
    let config = req
        .config
        .or_else(|| session.read().last_config.clone())
        .unwrap_or_else(|| Config::new(Vec::new()));
    blocking(move || {
        let l = layout(&session, rules, req.outcome, req.seed, req.threshold)?;
        let rows = l.expand_selection(&req.rows);
        let m = session.matrix();
        let bits = BitSet::from_indices(m.n_rows(), rows.iter().copied());
        let mask = Mask::new(bits.clone(), m.split());
        let distinguishing = distinguishing_feature(&mask, m)?;
        let results = targeted_discover(m, &config, &bits)?;
        Ok(Json(MapSearchResponse {
            selection_size: rows.len(),
            distinguishing,
            results: results
                .iter()
                .enumerate()
                .map(|(i, r)| SubgroupView::new(i, r))
                .collect(),
        }))
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct FavoritesRequest {
    pub rules: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FavoritesResponse {
    pub favorites: Vec<RuleMetrics>,
}

fn favorites_view(session: &Session) -> ApiResult<FavoritesResponse> {
    let rules = session.read().favorites.clone();
    let favorites = rules
        .into_iter()
        .map(|rule| {
            Ok(RuleMetrics {
                text: rule.to_text(),
                metrics: evaluate_metrics(session, &rule)?,
                rule,
                disabled: BTreeMap::new(),
            })
        })
        .collect::<ApiResult<Vec<_>>>()?;
    Ok(FavoritesResponse { favorites })
}

pub async fn get_favorites(
    State(app): AppRef,
    Path(id): Path<String>,
) -> ApiResult<Json<FavoritesResponse>> {
    let session = app.get(&id)?;
    blocking(move || favorites_view(&session).map(Json)).await
}

pub async fn put_favorites(
    State(app): AppRef,
    Path(id): Path<String>,
    Json(req): Json<FavoritesRequest>,
) -> ApiResult<Json<FavoritesResponse>> {
    let session = app.get(&id)?;
    let rules = req
        .rules
        .iter()
        .map(|t| parse_rule(t, session.matrix()))
        .collect::<Result<Vec<_>, _>>()?;
    session.write().favorites = rules;
    app.persist(&session);
    blocking(move || favorites_view(&session).map(Json)).await
}

/// Mean outcome over `rows`: the positive rate for binary outcomes.
pub fn base_rate(o: &OutcomeVector, rows: &[usize]) -> f64 {
    rows.iter().map(|&r| o.value(r)).sum::<f64>() / rows.len().max(1) as f64
}
