//! Two-worker/one-integrator harness for model-assisted pipeline stages.
//!
//! Every stage that consults language models runs the same protocol: two
//! *workers* with distinct identities answer the task independently, then
//! an *integrator* sees both answers next to the source material and
//! produces the final payload. The record keeps all three answers plus an
//! agreement verdict — whether the final answer matches worker A, worker
//! B, both, or neither — so downstream reports can quantify how often the
//! seats concur.
//!
//! Exchanges are stateless single turns. When a response cannot be parsed
//! or fails the task's validation, the follow-up request embeds the faulty
//! response, the error, and the original request, so any backend (or a
//! scripted mock) can answer from the request alone.

pub mod backend;
pub mod cache;
pub mod prompts;
pub mod stages;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use backend::{
    BackendError, CompletionRequest, CompletionResponse, EnsembleRole, HttpBackend, LlmBackend,
    MockBackend, MockScript, TaskRoute,
};
pub use cache::ResponseCache;
pub use prompts::{repair_prompt, Prompt, PROMPT_VERSION};

use crate::store::digest_value;

// ---------------------------------------------------------------------------
// Task identity
// ---------------------------------------------------------------------------

/// The model-assisted pipeline stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Mark the argued AI spans of an episode.
    Segment,
    /// Summarize one speaker's argument inside a span.
    Summarize,
    /// Extract a typed reasoning chain from a summarized argument.
    Extract,
    /// Classify a conclusion's topic and attitude.
    Classify,
    /// Compare an opposing pair of chains for divergences.
    Disagree,
    /// Place a causal root divergence onto the question map.
    Aggregate,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Segment => "segment",
            TaskKind::Summarize => "summarize",
            TaskKind::Extract => "extract",
            TaskKind::Classify => "classify",
            TaskKind::Disagree => "disagree",
            TaskKind::Aggregate => "aggregate",
        }
    }
}

// ---------------------------------------------------------------------------
// Agreement bookkeeping
// ---------------------------------------------------------------------------

/// How the integrator's final answer relates to the workers' answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agreement {
    /// The final answer matches neither worker.
    R1,
    /// The final answer matches worker A only.
    R2MatchesA,
    /// The final answer matches worker B only.
    R2MatchesB,
    /// The final answer matches both workers.
    R3,
}

/// Relate a final answer to the two worker answers under a task-specific
/// equivalence. An absent answer matches nothing — including another
/// absent answer — so all-absent exchanges land in [`Agreement::R1`].
pub fn classify_agreement<T>(
    final_payload: Option<&T>,
    a: Option<&T>,
    b: Option<&T>,
    mut eq: impl FnMut(&T, &T) -> bool,
) -> Agreement {
    let matches_a = match (final_payload, a) {
        (Some(f), Some(x)) => eq(f, x),
        _ => false,
    };
    let matches_b = match (final_payload, b) {
        (Some(f), Some(x)) => eq(f, x),
        _ => false,
    };
    match (matches_a, matches_b) {
        (true, true) => Agreement::R3,
        (true, false) => Agreement::R2MatchesA,
        (false, true) => Agreement::R2MatchesB,
        (false, false) => Agreement::R1,
    }
}

// ---------------------------------------------------------------------------
// The task contract
// ---------------------------------------------------------------------------

/// One unit of model-assisted work.
///
/// A task knows how to phrase its prompts, parse and validate answers, and
/// decide when two answers mean the same thing. The runner supplies the
/// protocol: repair loops, the optional worker follow-up turn, a single
/// corrective re-ask after a failed validation, and agreement bookkeeping.
pub trait EnsembleTask: Sync {
    /// The structured answer. `Option<Payload>` throughout: `None` means
    /// the model affirmatively answered "nothing here" (no argument in the
    /// span, say), which is a valid result, not an error.
    type Payload: Clone + PartialEq + std::fmt::Debug + Serialize + DeserializeOwned + Send;

    fn kind(&self) -> TaskKind;

    /// The task's content identity. Two tasks with equal `kind` and equal
    /// `input` are the same question and may share a cached answer.
    fn input(&self) -> Value;

    /// Key/value context (episode, speaker, ...) forwarded with every
    /// request; scripted backends match routing rules against it.
    fn meta(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }

    fn worker_prompt(&self) -> Prompt;

    /// Parse a worker's (possibly draft) answer. `Ok(None)` accepts an
    /// explicit "nothing here"; `Err` triggers a repair request.
    fn parse_worker(&self, text: &str) -> Result<Option<Self::Payload>, String>;

    /// Number of additional worker turns after the first. Tasks answered
    /// in several steps (one per source span, or a draft-then-revise
    /// exchange) return how many follow-ups each worker owes. Skipped when
    /// the first step already answered "nothing here".
    fn worker_followups(&self) -> usize {
        0
    }

    /// The prompt for follow-up turn `index` (0-based), given the draft
    /// accumulated so far.
    fn followup_prompt(&self, _index: usize, _draft: &Self::Payload) -> Prompt {
        unreachable!("task declared no follow-up turns")
    }

    /// Fold the answer to follow-up turn `index` into the draft.
    fn merge_followup(
        &self,
        _index: usize,
        draft: Self::Payload,
        _text: &str,
    ) -> Result<Self::Payload, String> {
        Ok(draft)
    }

    /// Normalize the finished draft. Returning `None` downgrades it to an
    /// explicit "nothing here" (e.g. an accumulation that stayed empty).
    fn finish_worker(&self, draft: Self::Payload) -> Option<Self::Payload> {
        Some(draft)
    }

    /// Parse the answer to a corrective re-ask (after a failed
    /// validation). Tasks whose corrected shape differs from the first
    /// worker turn override this.
    fn parse_corrected(
        &self,
        _draft: Self::Payload,
        text: &str,
    ) -> Result<Option<Self::Payload>, String> {
        self.parse_worker(text)
    }

    /// Semantic checks beyond parseability. A failure here earns the
    /// model exactly one corrective re-ask before the exchange is declared
    /// malformed.
    fn validate(&self, _payload: &Self::Payload) -> Result<(), String> {
        Ok(())
    }

    fn integrator_prompt(&self, a: Option<&Self::Payload>, b: Option<&Self::Payload>) -> Prompt;

    /// Parse the integrator's answer into the final payload plus free
    /// commentary kept verbatim in the record.
    fn parse_integrator(&self, text: &str) -> Result<(Option<Self::Payload>, Value), String>;

    /// Whether two answers count as the same for agreement bookkeeping.
    fn equivalent(&self, a: &Self::Payload, b: &Self::Payload) -> bool {
        a == b
    }
}

/// Content hash identifying a task instance: kind, input, and the prompt
/// revision that will phrase it.
pub fn hash_task<T: EnsembleTask + ?Sized>(task: &T) -> String {
    digest_value(&json!({
        "input": task.input(),
        "prompt_version": PROMPT_VERSION,
        "task": task.kind().name(),
    }))
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// One seat's contribution to an exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct WorkerReport<T> {
    /// The backend's stable identity string.
    pub identity: String,
    pub payload: Option<T>,
    /// Completions consumed, including repair and corrective turns.
    pub calls: u32,
}

/// The integrator's contribution: the final payload plus whatever extra
/// commentary its answer carried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct IntegratorReport<T> {
    pub identity: String,
    pub payload: Option<T>,
    /// Non-payload fields of the integrator's answer, kept verbatim.
    pub extra: Value,
    pub calls: u32,
}

/// The full, persistable outcome of one task exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct EnsembleRecord<T> {
    /// Task kind name, e.g. `"extract"`.
    pub task: String,
    pub input_hash: String,
    pub prompt_version: String,
    pub worker_a: WorkerReport<T>,
    pub worker_b: WorkerReport<T>,
    pub integrator: IntegratorReport<T>,
    pub agreement: Agreement,
    /// True when this record was answered from the cache in this process;
    /// never persisted.
    #[serde(skip, default)]
    pub from_cache: bool,
}

impl<T> EnsembleRecord<T> {
    /// The final answer: the integrator's payload.
    pub fn final_payload(&self) -> Option<&T> {
        self.integrator.payload.as_ref()
    }
}

/// The persistable outcome of a task answered by one seat alone. Stages
/// that need a single long-context pass (span marking over a whole
/// episode) use this instead of the full two-worker exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct SingleRecord<T> {
    /// Task kind name, e.g. `"segment"`.
    pub task: String,
    pub input_hash: String,
    pub prompt_version: String,
    pub seat: WorkerReport<T>,
    /// True when this record was answered from the cache in this process;
    /// never persisted.
    #[serde(skip, default)]
    pub from_cache: bool,
}

impl<T> SingleRecord<T> {
    pub fn final_payload(&self) -> Option<&T> {
        self.seat.payload.as_ref()
    }
}

// ---------------------------------------------------------------------------
// Errors & configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum EnsembleError {
    /// The two worker seats resolved to the same identity, which would
    /// reduce the ensemble to an echo chamber.
    #[error("both workers have identity {0:?}; the two worker seats must differ")]
    IdenticalWorkers(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    /// A seat kept producing unusable answers after all repair attempts.
    #[error("{role} produced no usable {task} answer after {attempts} attempts: {last_error}")]
    MalformedOutput {
        task: String,
        role: String,
        attempts: u32,
        last_error: String,
    },
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    /// Run the two workers on separate threads. Results are identical
    /// either way; this only affects wall-clock time.
    pub parallel_workers: bool,
    /// Extra attempts for *transient* backend failures (HTTP 429/5xx,
    /// transport drops), on top of the first try.
    pub retry_limit: u32,
    /// First retry delay; doubles per retry.
    pub retry_base_delay_ms: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            parallel_workers: true,
            retry_limit: 3,
            retry_base_delay_ms: 250,
        }
    }
}

/// Outcome of one seat's staged exchange, before it is attributed to a
/// task and role.
enum StageFailure {
    Backend(BackendError),
    Malformed { attempts: u32, last_error: String },
}

impl StageFailure {
    fn attribute(self, kind: TaskKind, role: EnsembleRole) -> EnsembleError {
        match self {
            StageFailure::Backend(e) => EnsembleError::Backend(e),
            StageFailure::Malformed { attempts, last_error } => EnsembleError::MalformedOutput {
                task: kind.name().to_string(),
                role: role.name().to_string(),
                attempts,
                last_error,
            },
        }
    }
}

// ---------------------------------------------------------------------------
// The runner
// ---------------------------------------------------------------------------

/// Repair turns granted per staged exchange, beyond the first ask.
const REPAIRS_PER_STAGE: u32 = 2;

/// The three seats plus policy: retries, parallelism, and the cache.
pub struct Ensemble {
    pub worker_a: Arc<dyn LlmBackend>,
    pub worker_b: Arc<dyn LlmBackend>,
    pub integrator: Arc<dyn LlmBackend>,
    pub config: EnsembleConfig,
    pub cache: Option<ResponseCache>,
}

impl Ensemble {
    pub fn new(
        worker_a: Arc<dyn LlmBackend>,
        worker_b: Arc<dyn LlmBackend>,
        integrator: Arc<dyn LlmBackend>,
    ) -> Self {
        Ensemble {
            worker_a,
            worker_b,
            integrator,
            config: EnsembleConfig::default(),
            cache: None,
        }
    }

    pub fn with_config(mut self, config: EnsembleConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Run one task end to end: cache probe, both workers, integrator,
    /// agreement verdict, cache fill.
    pub fn run<T: EnsembleTask>(
        &self,
        task: &T,
    ) -> Result<EnsembleRecord<T::Payload>, EnsembleError> {
        let identity_a = self.worker_a.identity();
        if identity_a == self.worker_b.identity() {
            return Err(EnsembleError::IdenticalWorkers(identity_a));
        }

        let input_hash = hash_task(task);
        if let Some(cache) = &self.cache {
            if let Some(mut record) = cache.load::<T::Payload>(task.kind(), &input_hash) {
                record.from_cache = true;
                return Ok(record);
            }
        }

        let route = TaskRoute {
            task_kind: task.kind(),
            input_hash: input_hash.clone(),
        };

        let (outcome_a, outcome_b) = if self.config.parallel_workers {
            std::thread::scope(|scope| {
                let a = scope
                    .spawn(|| self.run_worker(task, &*self.worker_a, EnsembleRole::WorkerA, &route));
                let b = scope
                    .spawn(|| self.run_worker(task, &*self.worker_b, EnsembleRole::WorkerB, &route));
                (a.join().expect("worker thread"), b.join().expect("worker thread"))
            })
        } else {
            (
                self.run_worker(task, &*self.worker_a, EnsembleRole::WorkerA, &route),
                self.run_worker(task, &*self.worker_b, EnsembleRole::WorkerB, &route),
            )
        };
        let report_a = outcome_a?;
        let report_b = outcome_b?;

        let integrator = self.run_integrator(task, &report_a, &report_b, &route)?;

        let agreement = classify_agreement(
            integrator.payload.as_ref(),
            report_a.payload.as_ref(),
            report_b.payload.as_ref(),
            |x, y| task.equivalent(x, y),
        );

        let record = EnsembleRecord {
            task: task.kind().name().to_string(),
            input_hash,
            prompt_version: PROMPT_VERSION.to_string(),
            worker_a: report_a,
            worker_b: report_b,
            integrator,
            agreement,
            from_cache: false,
        };
        if let Some(cache) = &self.cache {
            cache.store(&record);
        }
        Ok(record)
    }

    /// Run a task on the integrator seat alone: cache probe, one staged
    /// exchange (repairs, follow-ups, and the corrective re-ask included),
    /// cache fill. No agreement verdict — there is nothing to compare.
    pub fn run_single<T: EnsembleTask>(
        &self,
        task: &T,
    ) -> Result<SingleRecord<T::Payload>, EnsembleError> {
        let input_hash = hash_task(task);
        if let Some(cache) = &self.cache {
            if let Some(mut record) = cache.load_single::<T::Payload>(task.kind(), &input_hash) {
                record.from_cache = true;
                return Ok(record);
            }
        }

        let route = TaskRoute {
            task_kind: task.kind(),
            input_hash: input_hash.clone(),
        };
        let seat = self.run_worker(task, &*self.integrator, EnsembleRole::Integrator, &route)?;

        let record = SingleRecord {
            task: task.kind().name().to_string(),
            input_hash,
            prompt_version: PROMPT_VERSION.to_string(),
            seat,
            from_cache: false,
        };
        if let Some(cache) = &self.cache {
            cache.store_single(&record);
        }
        Ok(record)
    }

    /// One completion with retries for transient failures.
    fn ask(
        &self,
        backend: &dyn LlmBackend,
        request: &CompletionRequest,
    ) -> Result<String, BackendError> {
        let mut delay = self.config.retry_base_delay_ms;
        let mut failures = 0u32;
        loop {
            match backend.complete(request) {
                Ok(response) => return Ok(response.text),
                Err(e) if e.retryable() && failures < self.config.retry_limit => {
                    failures += 1;
                    log::warn!(
                        "{} call failed (retry {failures}/{}): {e}",
                        request.role.name(),
                        self.config.retry_limit
                    );
                    std::thread::sleep(Duration::from_millis(delay));
                    delay = delay.saturating_mul(2);
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Ask-and-repair loop: the first unusable answer earns up to
    /// [`REPAIRS_PER_STAGE`] repair turns, each embedding the previous
    /// response, the parse error, and the original request. Returns the
    /// parsed value and the raw text it came from.
    fn ask_until<P>(
        &self,
        backend: &dyn LlmBackend,
        role: EnsembleRole,
        route: &TaskRoute,
        meta: &BTreeMap<String, String>,
        original: &Prompt,
        calls: &mut u32,
        mut parse: impl FnMut(&str) -> Result<P, String>,
    ) -> Result<(P, String), StageFailure> {
        let mut prompt = original.clone();
        let mut attempts = 0u32;
        loop {
            let text = self
                .ask(backend, &completion_request(role, &prompt, route, meta))
                .map_err(StageFailure::Backend)?;
            *calls += 1;
            attempts += 1;
            match parse(&text) {
                Ok(parsed) => return Ok((parsed, text)),
                Err(error) if attempts <= REPAIRS_PER_STAGE => {
                    log::debug!("{} answer rejected (attempt {attempts}): {error}", role.name());
                    prompt = repair_prompt(original, &text, &error);
                }
                Err(last_error) => {
                    return Err(StageFailure::Malformed {
                        attempts,
                        last_error,
                    })
                }
            }
        }
    }

    fn run_worker<T: EnsembleTask>(
        &self,
        task: &T,
        backend: &dyn LlmBackend,
        role: EnsembleRole,
        route: &TaskRoute,
    ) -> Result<WorkerReport<T::Payload>, EnsembleError> {
        let meta = task.meta();
        let identity = backend.identity();
        let mut calls = 0u32;
        let attribute = |f: StageFailure| f.attribute(task.kind(), role);

        let first_prompt = task.worker_prompt();
        let (draft, mut last_text) = self
            .ask_until(backend, role, route, &meta, &first_prompt, &mut calls, |t| {
                task.parse_worker(t)
            })
            .map_err(attribute)?;

        let Some(mut payload) = draft else {
            return Ok(WorkerReport {
                identity,
                payload: None,
                calls,
            });
        };

        let mut last_prompt = first_prompt;
        for index in 0..task.worker_followups() {
            let followup = task.followup_prompt(index, &payload);
            let (merged, text) = self
                .ask_until(backend, role, route, &meta, &followup, &mut calls, |t| {
                    task.merge_followup(index, payload.clone(), t)
                })
                .map_err(attribute)?;
            payload = merged;
            last_text = text;
            last_prompt = followup;
        }

        let Some(payload) = task.finish_worker(payload) else {
            return Ok(WorkerReport {
                identity,
                payload: None,
                calls,
            });
        };

        let payload = self
            .correct_if_invalid(
                task,
                backend,
                role,
                route,
                &meta,
                &last_prompt,
                &last_text,
                Some(payload),
                &mut calls,
                |draft, text| {
                    task.parse_corrected(
                        draft.expect("corrective re-ask only runs on a present payload"),
                        text,
                    )
                    .map(|parsed| parsed.and_then(|p| task.finish_worker(p)))
                },
            )
            .map_err(attribute)?;

        Ok(WorkerReport {
            identity,
            payload,
            calls,
        })
    }

    fn run_integrator<T: EnsembleTask>(
        &self,
        task: &T,
        a: &WorkerReport<T::Payload>,
        b: &WorkerReport<T::Payload>,
        route: &TaskRoute,
    ) -> Result<IntegratorReport<T::Payload>, EnsembleError> {
        let meta = task.meta();
        let role = EnsembleRole::Integrator;
        let backend = &*self.integrator;
        let identity = backend.identity();
        let mut calls = 0u32;
        let attribute = |f: StageFailure| f.attribute(task.kind(), role);

        let prompt = task.integrator_prompt(a.payload.as_ref(), b.payload.as_ref());
        let ((payload, mut extra), last_text) = self
            .ask_until(backend, role, route, &meta, &prompt, &mut calls, |t| {
                task.parse_integrator(t)
            })
            .map_err(attribute)?;

        let payload = match payload {
            None => None,
            Some(p) => {
                let corrected = self
                    .correct_if_invalid(
                        task,
                        backend,
                        role,
                        route,
                        &meta,
                        &prompt,
                        &last_text,
                        Some(p),
                        &mut calls,
                        |_, text| {
                            task.parse_integrator(text).map(|(payload, new_extra)| {
                                extra = new_extra;
                                payload
                            })
                        },
                    )
                    .map_err(attribute)?;
                corrected
            }
        };

        Ok(IntegratorReport {
            identity,
            payload,
            extra,
            calls,
        })
    }

    /// Enforce `task.validate` with exactly one corrective re-ask: if the
    /// payload fails validation, send a repair request and accept the
    /// re-parsed answer only if it validates (or answers "nothing here").
    #[allow(clippy::too_many_arguments)]
    fn correct_if_invalid<T: EnsembleTask, F>(
        &self,
        task: &T,
        backend: &dyn LlmBackend,
        role: EnsembleRole,
        route: &TaskRoute,
        meta: &BTreeMap<String, String>,
        last_prompt: &Prompt,
        last_text: &str,
        payload: Option<T::Payload>,
        calls: &mut u32,
        mut reparse: F,
    ) -> Result<Option<T::Payload>, StageFailure>
    where
        F: FnMut(Option<T::Payload>, &str) -> Result<Option<T::Payload>, String>,
    {
        let Some(payload) = payload else {
            return Ok(None);
        };
        let Err(error) = task.validate(&payload) else {
            return Ok(Some(payload));
        };
        log::debug!("{} answer failed validation: {error}", role.name());

        let corrective = repair_prompt(last_prompt, last_text, &error);
        let text = self
            .ask(backend, &completion_request(role, &corrective, route, meta))
            .map_err(StageFailure::Backend)?;
        *calls += 1;
        let malformed = |last_error: String| StageFailure::Malformed {
            attempts: *calls,
            last_error,
        };
        match reparse(Some(payload), &text).map_err(malformed)? {
            None => Ok(None),
            Some(corrected) => match task.validate(&corrected) {
                Ok(()) => Ok(Some(corrected)),
                Err(e) => Err(StageFailure::Malformed {
                    attempts: *calls,
                    last_error: format!("still invalid after correction: {e}"),
                }),
            },
        }
    }
}

fn completion_request(
    role: EnsembleRole,
    prompt: &Prompt,
    route: &TaskRoute,
    meta: &BTreeMap<String, String>,
) -> CompletionRequest {
    CompletionRequest {
        role,
        system: prompt.system.clone(),
        user: prompt.user.clone(),
        route: Some(route.clone()),
        meta: meta.clone(),
    }
}
