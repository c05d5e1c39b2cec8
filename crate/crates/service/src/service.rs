//! The session registry behind the HTTP routes.
//!
//! Each session sits behind its own mutex, held while a mutation is checked,
//! logged and applied, so mutations to one session are totally ordered and
//! readers never see a half-applied step. Session creation is serialized
//! separately because it hands out pair blocks.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use prefbench_core::dataset::{Label, PreferenceDataset, PreferenceSample, Provenance, Source};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::condition::{Condition, Stage};
use crate::config::ServiceConfig;
use crate::error::ServiceError;
use crate::session::{shown, Feedback, NextItem, ResponseInput, Session};
use crate::store::{AssignedPair, Envelope, Event, EventStore};
use crate::survey::{SurveyAnswers, SurveyScore};
use crate::world::World;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub condition: Condition,
    #[serde(default)]
    pub replacement_of: Option<Uuid>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: Uuid,
    /// Bearer token required by every per-session route.
    pub token: String,
    pub condition: Condition,
    pub stage: Stage,
    pub pair_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResponseAck {
    pub accepted: bool,
    pub item_id: String,
    /// Stage after the response.
    pub stage: Stage,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback: Option<Feedback>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurveyResult {
    #[serde(flatten)]
    pub score: SurveyScore,
    pub attention_passed: bool,
    pub kept: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterDecision {
    pub keep: bool,
    pub attention_passed: bool,
    /// `None` until the survey is submitted.
    pub survey_passed: Option<bool>,
}

#[derive(Default)]
struct Allocation {
    next_block: HashMap<Condition, usize>,
    created: u64,
}

pub struct Service {
    cfg: ServiceConfig,
    world: World,
    store: EventStore,
    sessions: RwLock<HashMap<Uuid, Arc<Mutex<Session>>>>,
    order: RwLock<Vec<Uuid>>,
    allocation: Mutex<Allocation>,
}

impl Service {
    /// Builds the service, replaying the configured event log if any.
    pub fn new(cfg: ServiceConfig) -> Result<Service, ServiceError> {
        cfg.validate()?;
        let world = World::build(&cfg)?;
        let (store, events) = match &cfg.store {
            Some(path) => EventStore::open(path)?,
            None => (EventStore::in_memory(), Vec::new()),
        };
        let service = Service {
            cfg,
            world,
            store,
            sessions: RwLock::new(HashMap::new()),
            order: RwLock::new(Vec::new()),
            allocation: Mutex::new(Allocation::default()),
        };
        for env in events {
            service.replay(env)?;
        }
        Ok(service)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    fn replay(&self, env: Envelope) -> Result<(), ServiceError> {
        let corrupt = |e: ServiceError| ServiceError::Store(format!("event {}: {e}", env.seq));
        match env.event {
            Event::Created { condition, token, block, replacement_of, pairs } => {
                let session = Session::new(&self.world, env.session, token, condition, block, replacement_of, pairs)
                    .map_err(corrupt)?;
                self.insert_created(session);
            }
            Event::Responded { item_id, answer } => {
                let s = self.session(&env.session).map_err(corrupt)?;
                let mut s = s.lock();
                let input = ResponseInput { item_id, answer };
                s.check_response(&self.world, &input).map_err(corrupt)?;
                s.apply_response(input, env.at_ms);
            }
            Event::SurveySubmitted { answers } => {
                let s = self.session(&env.session).map_err(corrupt)?;
                let mut s = s.lock();
                let threshold = self.cfg.experiment(s.condition.experiment).pass_threshold;
                let outcome = s.check_survey(&self.world, &answers, threshold, env.at_ms).map_err(corrupt)?;
                s.apply_survey(outcome);
            }
        }
        Ok(())
    }

    fn insert_created(&self, session: Session) {
        let mut alloc = self.allocation.lock();
        alloc.created += 1;
        match session.replacement_of {
            None => {
                let next = alloc.next_block.entry(session.condition).or_insert(0);
                *next = (*next).max(session.block + 1);
            }
            Some(target) => {
                if let Some(t) = self.sessions.read().get(&target) {
                    t.lock().replaced_by = Some(session.id);
                }
            }
        }
        self.order.write().push(session.id);
        self.sessions.write().insert(session.id, Arc::new(Mutex::new(session)));
    }

    fn session(&self, id: &Uuid) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.sessions.read().get(id).cloned().ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    fn authorized(&self, id: &Uuid, token: Option<&str>) -> Result<Arc<Mutex<Session>>, ServiceError> {
        let s = self.session(id)?;
        if token != Some(s.lock().token.as_str()) {
            return Err(ServiceError::Unauthorized);
        }
        Ok(s)
    }

    pub fn create_session(&self, req: CreateSession) -> Result<CreatedSession, ServiceError> {
        let c = req.condition;
        if !self.cfg.conditions.contains(&c) {
            return Err(ServiceError::ConditionDisabled(c.to_string()));
        }
        let per_session = self.cfg.experiment(c.experiment).pairs_per_session;
        let pool = self.world.pool(c.experiment);
        // Held until the session is registered so blocks are never handed out twice.
        let alloc = self.allocation.lock();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(1000 + alloc.created);

        let (block, mut pair_ids): (usize, Vec<String>) = match req.replacement_of {
            Some(target) => {
                let t = self.session(&target)?;
                let t = t.lock();
                let refuse = |why| Err(ServiceError::NotReplaceable(target.to_string(), why));
                if t.condition != c {
                    return refuse("it belongs to another condition");
                }
                if !t.is_done() || t.kept() {
                    return refuse("it was not filtered out");
                }
                if t.replaced_by.is_some() {
                    return refuse("it was already replaced");
                }
                let body = t.assigned.iter().filter(|a| a.pair_id != self.world.pairs[pool.attention].pair_id);
                (t.block, body.map(|a| a.pair_id.clone()).collect())
            }
            None => {
                let block = alloc.next_block.get(&c).copied().unwrap_or(0);
                if block >= self.world.block_count(c.experiment, per_session) {
                    return Err(ServiceError::PoolExhausted(c.to_string()));
                }
                let len = per_session - 1;
                let ids = pool.pairs[block * len..(block + 1) * len]
                    .iter()
                    .map(|&i| self.world.pairs[i].pair_id.clone())
                    .collect();
                (block, ids)
            }
        };
        pair_ids.shuffle(&mut rng);
        pair_ids.push(self.world.pairs[pool.attention].pair_id.clone());
        let pairs: Vec<AssignedPair> =
            pair_ids.into_iter().map(|pair_id| AssignedPair { pair_id, swapped: rng.random() }).collect();

        let id = Uuid::new_v4();
        let token = Uuid::new_v4().simple().to_string();
        let session = Session::new(&self.world, id, token.clone(), c, block, req.replacement_of, pairs.clone())?;
        self.store.append(
            id,
            Event::Created { condition: c, token: token.clone(), block, replacement_of: req.replacement_of, pairs },
        )?;
        let created = CreatedSession {
            session_id: id,
            token,
            condition: c,
            stage: session.stage(),
            pair_ids: session.assigned.iter().map(|a| a.pair_id.clone()).collect(),
        };
        drop(alloc);
        self.insert_created(session);
        Ok(created)
    }

    pub fn next_item(&self, id: &Uuid, token: Option<&str>) -> Result<NextItem, ServiceError> {
        let s = self.authorized(id, token)?;
        let s = s.lock();
        s.next_item(&self.world)
    }

    pub fn submit_response(
        &self,
        id: &Uuid,
        token: Option<&str>,
        input: ResponseInput,
    ) -> Result<ResponseAck, ServiceError> {
        let s = self.authorized(id, token)?;
        let mut s = s.lock();
        let feedback = s.check_response(&self.world, &input)?;
        let env = self
            .store
            .append(*id, Event::Responded { item_id: input.item_id.clone(), answer: input.answer.clone() })?;
        let item_id = input.item_id.clone();
        s.apply_response(input, env.at_ms);
        Ok(ResponseAck { accepted: true, item_id, stage: s.stage(), feedback })
    }

    pub fn submit_survey(
        &self,
        id: &Uuid,
        token: Option<&str>,
        answers: SurveyAnswers,
    ) -> Result<SurveyResult, ServiceError> {
        let s = self.authorized(id, token)?;
        let mut s = s.lock();
        let threshold = self.cfg.experiment(s.condition.experiment).pass_threshold;
        let outcome = s.check_survey(&self.world, &answers, threshold, crate::store::now_ms())?;
        let env = self.store.append(*id, Event::SurveySubmitted { answers })?;
        let result = SurveyResult {
            score: outcome.score.clone(),
            attention_passed: outcome.attention_passed,
            kept: outcome.kept,
        };
        s.apply_survey(crate::session::SurveyOutcome { at_ms: env.at_ms, ..outcome });
        Ok(result)
    }

    /// Keep or discard a session whose elicitation is complete.
    pub fn attention_filter(&self, id: &Uuid) -> Result<FilterDecision, ServiceError> {
        let s = self.session(id)?;
        let s = s.lock();
        match s.stage() {
            Stage::Survey | Stage::Done => {}
            other => return Err(ServiceError::WrongStage(other)),
        }
        let attention_passed = s.attention_passed(&self.world);
        let survey_passed = s.survey.as_ref().map(|o| o.score.passed);
        Ok(FilterDecision { keep: attention_passed && survey_passed == Some(true), attention_passed, survey_passed })
    }

    /// Snapshot of every session of `c`, in creation order.
    fn sessions_of(&self, c: Condition) -> Vec<Session> {
        let order = self.order.read().clone();
        let sessions = self.sessions.read();
        order.iter().filter_map(|id| sessions.get(id)).map(|s| s.lock().clone()).filter(|s| s.condition == c).collect()
    }

    fn samples(
        &self,
        c: Condition,
        keep: impl Fn(Label) -> bool,
    ) -> Result<(Vec<PreferenceSample>, u64), ServiceError> {
        let kept: Vec<Session> = self.sessions_of(c).into_iter().filter(Session::kept).collect();
        if kept.is_empty() {
            return Err(ServiceError::NoKeptSessions(c.to_string()));
        }
        let mut samples = Vec::new();
        for s in &kept {
            for (pair, swapped, label) in s.elicitation_choices(&self.world) {
                if !keep(label) {
                    continue;
                }
                let (a, b) = shown(&self.world, pair, swapped);
                samples.push(PreferenceSample {
                    pair_id: self.world.pairs[pair].pair_id.clone(),
                    sigma1: a.clone(),
                    sigma2: b.clone(),
                    label,
                    source: Source::Human,
                    annotator_id: Some(s.id.to_string()),
                    condition: Some(c.to_string()),
                });
            }
        }
        Ok((samples, kept.len() as u64))
    }

    fn dataset(&self, protocol: String, samples: Vec<PreferenceSample>, sessions: u64) -> PreferenceDataset {
        let mut d = PreferenceDataset::new(
            self.world.main_map(),
            Provenance {
                protocol,
                seed: Some(self.cfg.seed),
                counts: BTreeMap::from([("sessions".to_string(), sessions)]),
                annotator: None,
            },
        );
        d.samples = samples;
        d
    }

    /// Strict preferences from kept sessions, plus "same" as half/half labels
    /// when `include_same` is set.
    pub fn export(&self, c: Condition, include_same: bool) -> Result<PreferenceDataset, ServiceError> {
        let (samples, sessions) = self.samples(c, |l| l.is_strict() || (include_same && l == Label::Same))?;
        Ok(self.dataset(format!("elicitation:{c}"), samples, sessions))
    }

    /// The "same" and "can't tell" responses of kept sessions.
    pub fn export_sidecar(&self, c: Condition) -> Result<PreferenceDataset, ServiceError> {
        let (samples, sessions) = self.samples(c, |l| !l.is_strict())?;
        Ok(self.dataset(format!("elicitation-sidecar:{c}"), samples, sessions))
    }

    pub fn store_path(&self) -> Option<&std::path::Path> {
        self.store.path()
    }
}
