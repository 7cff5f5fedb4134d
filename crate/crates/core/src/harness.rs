//! Evaluation protocol.
//!
//! A run resolves its evaluation contexts, computes one reference front per
//! context (exact oracle when the cap never binds, otherwise the union of the
//! ε-pruned oracle front and a specialist's front), builds an approximate
//! front for every (seed × context) cell, and scores the cells with NHGR,
//! EUGR, EUM and raw hypervolume. NHGR and EUGR are pooled over all cells
//! into an interquartile mean and an optimality gap.
//!
//! Every random draw comes from a stream derived from the cell's seed and
//! the context's position in the config, so reports do not depend on the
//! thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    build_front, random_policy_front, train_scalarized_q, AgentError, AgentSnapshot, ContextSource,
    SnapshotBody, TabularQ, TrainConfig,
};
use crate::aggregate::{
    iqm, optimality_gap, sample_simplex_many, RandomStream, ScoreSample, RNG_NAME,
};
use crate::lavagrid::{
    builtin_context, AgentFile, ContextFile, LavaGridContext, LavaGridSpace, LavaPlacementSpace,
    LayoutError, RandomizationSpace, DEFAULT_GAMMA, DEFAULT_MAX_STEPS, NUM_OBJECTIVES,
};
use crate::momdp::ContextSpace;
use crate::oracle::{pareto_backward_induction, OracleError};
use crate::pareto::io::front_to_csv;
use crate::pareto::{eugr, eum, hv_norm, hypervolume, nhgr, FrontBounds, ParetoError, ParetoFront};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_ORACLE_CAP: usize = 64;

/// Stream ids, one per consumer of randomness.
const STREAM_GENERALIST: u64 = 1;
const STREAM_SPECIALIST: u64 = 2;
const STREAM_RANDOM: u64 = 3;
const STREAM_EUM: u64 = 4;
const STREAM_REFERENCE: u64 = 5;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("config lists no evaluation contexts")]
    NoContexts,
    #[error("config lists no seeds")]
    NoSeeds,
    #[error("unknown builtin context {0:?}")]
    UnknownContext(String),
    #[error("context {name}: {source}")]
    Context { name: String, source: LayoutError },
    #[error("no reference front for context {0}")]
    MissingReference(String),
    #[error("specialist training budget is zero")]
    ZeroBudget,
    #[error("specialist produced an empty front")]
    EmptyFront,
    #[error("missing snapshot: {0}")]
    MissingSnapshot(String),
    #[error("snapshot {label}: {reason}")]
    SnapshotMismatch { label: String, reason: String },
    #[error("report: {0}")]
    Report(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
}

/// An evaluation context: a builtin by name, or spelled out inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ContextSpec {
    Builtin(String),
    Inline(InlineContext),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineContext {
    pub name: String,
    pub tiles: Vec<String>,
    pub agent: AgentFile,
    pub weights: [f64; 3],
}

impl ContextSpec {
    pub fn name(&self) -> &str {
        match self {
            ContextSpec::Builtin(n) => n,
            ContextSpec::Inline(c) => &c.name,
        }
    }

    pub fn resolve(&self) -> Result<LavaGridContext, HarnessError> {
        match self {
            ContextSpec::Builtin(n) => {
                builtin_context(n).ok_or_else(|| HarnessError::UnknownContext(n.clone()))
            }
            ContextSpec::Inline(c) => {
                let file = ContextFile {
                    tiles: c.tiles.clone(),
                    agent: c.agent.clone(),
                    weights: c.weights,
                };
                file.into_context(c.name.clone())
                    .map_err(|source| HarnessError::Context {
                        name: c.name.clone(),
                        source,
                    })
            }
        }
    }

    pub fn inline(ctx: &LavaGridContext) -> Self {
        let f = ContextFile::from(ctx);
        ContextSpec::Inline(InlineContext {
            name: ctx.id.clone(),
            tiles: f.tiles,
            agent: f.agent,
            weights: f.weights,
        })
    }
}

/// Learning settings shared by every agent of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    /// Episodes per specialist (one specialist per context and seed).
    pub specialist_episodes: usize,
    /// Episodes for the single generalist of each seed.
    pub generalist_episodes: usize,
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub anneal_fraction: f64,
    pub weight_resolution: usize,
    pub shared_experience: bool,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            specialist_episodes: 20_000,
            generalist_episodes: 100_000,
            alpha: t.alpha,
            epsilon_start: t.epsilon_start,
            epsilon_end: t.epsilon_end,
            anneal_fraction: t.anneal_fraction,
            weight_resolution: t.weight_resolution,
            shared_experience: t.shared_experience,
        }
    }
}

impl TrainingSettings {
    pub fn train_config(&self, episodes: usize, gamma: f64, max_steps: usize) -> TrainConfig {
        TrainConfig {
            episodes,
            gamma,
            alpha: self.alpha,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            anneal_fraction: self.anneal_fraction,
            max_steps,
            weight_resolution: self.weight_resolution,
            shared_experience: self.shared_experience,
        }
    }
}

fn default_domain() -> String {
    "lavagrid".into()
}
fn default_hundred() -> usize {
    100
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}
fn default_cap() -> Option<usize> {
    Some(DEFAULT_ORACLE_CAP)
}
fn default_space() -> RandomizationSpace {
    RandomizationSpace::Layouts(LavaGridSpace::standard())
}

/// One evaluation run, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_domain")]
    pub domain: String,
    pub contexts: Vec<ContextSpec>,
    pub seeds: Vec<u64>,
    /// Caps the weight-grid sweep per context and sets the random
    /// baseline's rollout count.
    #[serde(default = "default_hundred")]
    pub episodes_per_evaluation: usize,
    /// Simplex weights drawn per cell for EUM and EUGR.
    #[serde(default = "default_hundred")]
    pub weight_samples: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Episode step cap; also the oracle horizon.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default = "default_space")]
    pub randomization: RandomizationSpace,
    /// Largest return set kept per oracle state; `null` means exact.
    #[serde(default = "default_cap")]
    pub oracle_cap: Option<usize>,
}

impl EvalConfig {
    /// The eight builtin contexts on the standard domain.
    pub fn standard(seeds: Vec<u64>) -> Self {
        Self {
            domain: default_domain(),
            contexts: crate::lavagrid::builtin_names()
                .into_iter()
                .map(|n| ContextSpec::Builtin(n.to_string()))
                .collect(),
            seeds,
            episodes_per_evaluation: 100,
            weight_samples: 100,
            gamma: DEFAULT_GAMMA,
            max_steps: DEFAULT_MAX_STEPS,
            training: TrainingSettings::default(),
            randomization: default_space(),
            oracle_cap: default_cap(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let c: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.domain != "lavagrid" {
            return bad(format!("unsupported domain {:?}", self.domain));
        }
        if self.contexts.is_empty() {
            return Err(HarnessError::NoContexts);
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::NoSeeds);
        }
        for (i, c) in self.contexts.iter().enumerate() {
            if self.contexts[..i]
                .iter()
                .any(|d| d.name().eq_ignore_ascii_case(c.name()))
            {
                return bad(format!("duplicate context {:?}", c.name()));
            }
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return bad(format!("duplicate seed {s}"));
            }
        }
        if self.episodes_per_evaluation == 0 || self.weight_samples == 0 {
            return bad("episodes_per_evaluation and weight_samples must be positive".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if self.training.specialist_episodes == 0 || self.training.generalist_episodes == 0 {
            return bad("training episodes must be positive".into());
        }
        if self.training.weight_resolution == 0 {
            return bad("weight_resolution must be positive".into());
        }
        if self.oracle_cap == Some(0) {
            return bad("oracle_cap must be positive or null".into());
        }
        Ok(())
    }

    /// Contexts in config order, validated for the domain.
    pub fn resolve_contexts(&self) -> Result<Vec<LavaGridContext>, HarnessError> {
        self.contexts
            .iter()
            .map(|spec| {
                let mut ctx = spec.resolve()?;
                ctx.id = spec.name().to_string();
                ctx.layout
                    .validate()
                    .map_err(|source| HarnessError::Context {
                        name: ctx.id.clone(),
                        source,
                    })?;
                Ok(ctx)
            })
            .collect()
    }

    fn specialist_config(&self) -> TrainConfig {
        self.training.train_config(
            self.training.specialist_episodes,
            self.gamma,
            self.max_steps,
        )
    }

    fn generalist_config(&self) -> TrainConfig {
        self.training.train_config(
            self.training.generalist_episodes,
            self.gamma,
            self.max_steps,
        )
    }
}

/// Horizon of the micro-suite: long enough that every goal route fits.
pub const MICRO_HORIZON: usize = 30;
pub const MICRO_SUITE_SIZE: usize = 5;
/// Smallest normalized hypervolume a micro-context's exact front must have.
pub const MICRO_MIN_HV_NORM: f64 = 0.1;
const MICRO_SEED: u64 = 1;

/// 5×5 base of the micro-suite: goals and start fixed, lava randomized.
pub fn micro_space() -> LavaPlacementSpace {
    LavaPlacementSpace {
        tiles: [".....", ".G.Y.", ".....", "..B..", "....."]
            .iter()
            .map(|r| r.to_string())
            .collect(),
        agent: AgentFile {
            x: 2,
            y: 4,
            dir: "N".into(),
        },
        lava_min: 3,
        lava_max: 8,
        fixed_weights: None,
    }
}

/// The first draws of [`micro_space`] whose exact front has normalized
/// hypervolume at least [`MICRO_MIN_HV_NORM`]; draws with a flat or
/// degenerate front cannot be scored and are skipped.
pub fn micro_suite() -> Result<Vec<LavaGridContext>, HarnessError> {
    let space = micro_space();
    let mut suite = Vec::new();
    let mut stream_id = 0;
    while suite.len() < MICRO_SUITE_SIZE {
        let mut ctx = space
            .sample(RandomStream::new(MICRO_SEED, stream_id))
            .map_err(|source| HarnessError::Context {
                name: format!("micro-{stream_id}"),
                source,
            })?;
        let front = pareto_backward_induction(&ctx, DEFAULT_GAMMA, MICRO_HORIZON, None)?.front;
        let score = FrontBounds::of(&front)
            .ok()
            .map(|b| hv_norm(&front, &b))
            .transpose()?;
        if score.is_some_and(|s| s >= MICRO_MIN_HV_NORM) {
            ctx.id = format!("micro-{stream_id}");
            suite.push(ctx);
        }
        stream_id += 1;
    }
    Ok(suite)
}

/// Exact-oracle evaluation on the micro-suite, with a generalist randomized
/// over the same family the suite is drawn from.
pub fn micro_config(seeds: Vec<u64>) -> Result<EvalConfig, HarnessError> {
    Ok(EvalConfig {
        contexts: micro_suite()?.iter().map(ContextSpec::inline).collect(),
        max_steps: MICRO_HORIZON,
        randomization: RandomizationSpace::LavaPlacement(micro_space()),
        oracle_cap: None,
        ..EvalConfig::standard(seeds)
    })
}

/// Where a reference front came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    OracleExact,
    OracleEpsPruned,
    Specialist,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::OracleExact => "oracle-exact",
            Provenance::OracleEpsPruned => "oracle-eps-pruned",
            Provenance::Specialist => "specialist",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFront {
    pub context: String,
    pub provenance: Provenance,
    /// Per-state pruning slack of the oracle; zero when exact.
    pub epsilon: f64,
    /// `None` when some objective has no range on the front.
    pub hv_norm: Option<f64>,
    pub front: ParetoFront,
}

impl ReferenceFront {
    pub fn scorable(&self) -> bool {
        self.hv_norm.is_some_and(|h| h > 0.0)
    }
}

/// Pareto filter of the greedy fronts of a specialist trained on `ctx`.
pub fn specialist_front(
    ctx: &LavaGridContext,
    config: &TrainConfig,
    stream: RandomStream,
) -> Result<ParetoFront, HarnessError> {
    if config.episodes == 0 {
        return Err(HarnessError::ZeroBudget);
    }
    let grid = config.weight_grid(NUM_OBJECTIVES)?;
    let q = train_scalarized_q(&ContextSource::Fixed(ctx.clone()), &grid, config, stream)?;
    let front = build_front(&q, ctx, config.gamma, None)?.front;
    if front.is_empty() {
        return Err(HarnessError::EmptyFront);
    }
    Ok(front)
}

fn reference_hv(front: &ParetoFront) -> Result<Option<f64>, HarnessError> {
    match FrontBounds::of(front) {
        Ok(b) => Ok(Some(hv_norm(front, &b)?)),
        Err(ParetoError::DegenerateRange { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// One reference front per context, in config order.
pub fn make_reference_fronts(config: &EvalConfig) -> Result<Vec<ReferenceFront>, HarnessError> {
    config.validate()?;
    let contexts = config.resolve_contexts()?;
    contexts
        .par_iter()
        .enumerate()
        .map(|(ci, ctx)| {
            let oracle =
                pareto_backward_induction(ctx, config.gamma, config.max_steps, config.oracle_cap)?;
            let (front, provenance) = if !oracle.approximate {
                (oracle.front, Provenance::OracleExact)
            } else {
                let stream = RandomStream::new(config.seeds[0], STREAM_REFERENCE).derive(ci as u64);
                let spec = specialist_front(ctx, &config.specialist_config(), stream)?;
                let union = oracle.front.union(&spec)?;
                let from_spec = union
                    .points()
                    .iter()
                    .any(|p| !oracle.front.points().contains(p));
                (
                    union,
                    if from_spec {
                        Provenance::Specialist
                    } else {
                        Provenance::OracleEpsPruned
                    },
                )
            };
            if front.is_empty() {
                return Err(HarnessError::MissingReference(ctx.id.clone()));
            }
            Ok(ReferenceFront {
                context: ctx.id.clone(),
                provenance,
                epsilon: oracle.epsilon,
                hv_norm: reference_hv(&front)?,
                front,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Generalist,
    Specialist,
    Random,
    /// The reference fronts scored against themselves.
    Oracle,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Generalist => "generalist",
            AgentKind::Specialist => "specialist",
            AgentKind::Random => "random",
            AgentKind::Oracle => "oracle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            AgentKind::Generalist,
            AgentKind::Specialist,
            AgentKind::Random,
            AgentKind::Oracle,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub seed: u64,
    pub context: String,
    pub provenance: Provenance,
    pub front: ParetoFront,
    /// `None` when the context is excluded.
    pub nhgr: Option<f64>,
    /// `None` when the reference EUM is zero.
    pub eugr: Option<f64>,
    /// The reference EUM was negative, so a larger ratio is worse.
    pub eugr_negative_denominator: bool,
    pub eum: f64,
    /// Raw hypervolume with the reference front's `v_min` as reference point.
    pub hypervolume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exclusion {
    pub context: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub cells: usize,
    pub iqm: f64,
    pub optimality_gap: f64,
}

impl Summary {
    pub fn of(scores: &[f64]) -> Option<Self> {
        let sample = ScoreSample::new(scores.to_vec()).ok()?;
        Some(Self {
            cells: scores.len(),
            iqm: iqm(&sample),
            optimality_gap: optimality_gap(&sample, 1.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aggregates {
    pub nhgr: Option<Summary>,
    pub eugr: Option<Summary>,
}

impl Aggregates {
    pub fn of(cells: &[Cell]) -> Self {
        let nhgr: Vec<f64> = cells.iter().filter_map(|c| c.nhgr).collect();
        let eugr: Vec<f64> = cells.iter().filter_map(|c| c.eugr).collect();
        Self {
            nhgr: Summary::of(&nhgr),
            eugr: Summary::of(&eugr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub schema_version: u32,
    pub software_version: String,
    pub rng: String,
    pub agent: AgentKind,
    /// What "optimal front" means for this run.
    pub front_definition: String,
    pub hypervolume_reference: String,
    pub config: EvalConfig,
    pub references: Vec<ReferenceFront>,
    pub excluded_contexts: Vec<Exclusion>,
    /// Ordered by seed, then context name.
    pub cells: Vec<Cell>,
    pub aggregates: Aggregates,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Parses a report, rejecting other schema versions before anything else.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| HarnessError::Report(e.to_string()))?;
        match value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
        {
            Some(v) if v == REPORT_SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(HarnessError::Report(format!(
                    "schema version {v}, expected {REPORT_SCHEMA_VERSION}"
                )))
            }
            None => return Err(HarnessError::Report("missing schema_version".into())),
        }
        serde_json::from_value(value).map_err(|e| HarnessError::Report(e.to_string()))
    }

    /// Flat `seed,context,metric,value,provenance` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,context,metric,value,provenance\n");
        for c in &self.cells {
            let p = c.provenance.as_str();
            let mut row = |metric: &str, v: f64| {
                let _ = writeln!(
                    out,
                    "{},{},{metric},{},{p}",
                    c.seed,
                    c.context,
                    crate::pareto::io::format_decimal(v)
                );
            };
            if let Some(v) = c.nhgr {
                row("nhgr", v);
            }
            if let Some(v) = c.eugr {
                row("eugr", v);
            }
            row("eum", c.eum);
            row("hypervolume", c.hypervolume);
        }
        out
    }
}

fn score_cell(
    seed: u64,
    ci: usize,
    reference: &ReferenceFront,
    front: ParetoFront,
    weight_samples: usize,
) -> Result<Cell, HarnessError> {
    let weights = sample_simplex_many(
        RandomStream::new(seed, STREAM_EUM).derive(ci as u64),
        NUM_OBJECTIVES,
        weight_samples,
    )
    .map_err(|e| HarnessError::Config(e.to_string()))?;
    let nhgr = if reference.scorable() {
        Some(nhgr(&front, &reference.front)?)
    } else {
        None
    };
    let (eugr, negative) = match eugr(&front, &reference.front, &weights) {
        Ok(e) => (Some(e.ratio), e.negative_denominator),
        Err(ParetoError::UndefinedRatio) => (None, false),
        Err(e) => return Err(e.into()),
    };
    let v_min = FrontBounds::of(&reference.front)
        .map(|b| b.v_min().clone())
        .or_else(|_| crate::pareto::elementwise_min_max(&reference.front).map(|(lo, _)| lo))?;
    Ok(Cell {
        seed,
        context: reference.context.clone(),
        provenance: reference.provenance,
        nhgr,
        eugr,
        eugr_negative_denominator: negative,
        eum: eum(&front, &weights)?,
        hypervolume: hypervolume(&front, &v_min)?,
        front,
    })
}

/// Scores prepared fronts, `fronts[seed_index][context_index]`.
pub fn assemble_report(
    config: &EvalConfig,
    references: &[ReferenceFront],
    agent: AgentKind,
    fronts: Vec<Vec<ParetoFront>>,
) -> Result<EvalReport, HarnessError> {
    let mut jobs = Vec::new();
    for (si, per_ctx) in fronts.into_iter().enumerate() {
        if per_ctx.len() != references.len() {
            return Err(HarnessError::MissingReference(format!(
                "{} fronts for {} contexts",
                per_ctx.len(),
                references.len()
            )));
        }
        for (ci, f) in per_ctx.into_iter().enumerate() {
            jobs.push((config.seeds[si], ci, f));
        }
    }
    let mut cells: Vec<Cell> = jobs
        .into_par_iter()
        .map(|(seed, ci, f)| score_cell(seed, ci, &references[ci], f, config.weight_samples))
        .collect::<Result<_, _>>()?;
    cells.sort_by(|a, b| a.seed.cmp(&b.seed).then_with(|| a.context.cmp(&b.context)));
    let excluded_contexts = references
        .iter()
        .filter(|r| !r.scorable())
        .map(|r| Exclusion {
            context: r.context.clone(),
            reason: if r.hv_norm.is_none() {
                "an objective has no range on the reference front".into()
            } else {
                "reference front has zero normalized hypervolume".into()
            },
        })
        .collect();
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        software_version: VERSION.to_string(),
        rng: RNG_NAME.to_string(),
        agent,
        front_definition: format!(
            "{}-step finite-horizon discounted returns, gamma {}",
            config.max_steps, config.gamma
        ),
        hypervolume_reference: "elementwise minimum of the reference front".into(),
        config: config.clone(),
        references: references.to_vec(),
        excluded_contexts,
        aggregates: Aggregates::of(&cells),
        cells,
    })
}

fn seed_stream(seed: u64, id: u64) -> RandomStream {
    RandomStream::new(seed, id)
}

/// The generalist of one seed, trained on the config's randomization space.
pub fn train_generalist(config: &EvalConfig, seed: u64) -> Result<TabularQ, HarnessError> {
    let tc = config.generalist_config();
    let grid = tc.weight_grid(NUM_OBJECTIVES)?;
    Ok(train_scalarized_q(
        &ContextSource::Randomized(config.randomization.clone()),
        &grid,
        &tc,
        seed_stream(seed, STREAM_GENERALIST),
    )?)
}

/// The specialist of one seed for the context at `index` in the config.
pub fn train_specialist(
    config: &EvalConfig,
    seed: u64,
    index: usize,
    ctx: &LavaGridContext,
) -> Result<TabularQ, HarnessError> {
    let tc = config.specialist_config();
    let grid = tc.weight_grid(NUM_OBJECTIVES)?;
    Ok(train_scalarized_q(
        &ContextSource::Fixed(ctx.clone()),
        &grid,
        &tc,
        seed_stream(seed, STREAM_SPECIALIST).derive(index as u64),
    )?)
}

fn sweep_front(
    config: &EvalConfig,
    q: &TabularQ,
    ctx: &LavaGridContext,
) -> Result<ParetoFront, HarnessError> {
    Ok(build_front(q, ctx, config.gamma, Some(config.episodes_per_evaluation))?.front)
}

fn random_front(
    config: &EvalConfig,
    seed: u64,
    index: usize,
    ctx: &LavaGridContext,
) -> Result<ParetoFront, HarnessError> {
    let stream = seed_stream(seed, STREAM_RANDOM).derive(index as u64);
    Ok(random_policy_front(
        ctx,
        config.episodes_per_evaluation,
        config.gamma,
        config.max_steps,
        stream,
    )?)
}

/// Trained agents of one kind, indexed like the config's seeds and contexts.
pub enum TrainedAgents {
    /// One table per seed.
    Generalist(Vec<TabularQ>),
    /// `tables[seed][context]`.
    Specialist(Vec<Vec<TabularQ>>),
    Random,
    Oracle,
}

impl TrainedAgents {
    pub fn kind(&self) -> AgentKind {
        match self {
            TrainedAgents::Generalist(_) => AgentKind::Generalist,
            TrainedAgents::Specialist(_) => AgentKind::Specialist,
            TrainedAgents::Random => AgentKind::Random,
            TrainedAgents::Oracle => AgentKind::Oracle,
        }
    }

    pub fn train(config: &EvalConfig, kind: AgentKind) -> Result<Self, HarnessError> {
        config.validate()?;
        let contexts = config.resolve_contexts()?;
        Ok(match kind {
            AgentKind::Generalist => TrainedAgents::Generalist(
                config
                    .seeds
                    .par_iter()
                    .map(|&s| train_generalist(config, s))
                    .collect::<Result<_, _>>()?,
            ),
            AgentKind::Specialist => {
                let jobs: Vec<(u64, usize)> = config
                    .seeds
                    .iter()
                    .flat_map(|&s| (0..contexts.len()).map(move |ci| (s, ci)))
                    .collect();
                let flat: Vec<TabularQ> = jobs
                    .par_iter()
                    .map(|&(s, ci)| train_specialist(config, s, ci, &contexts[ci]))
                    .collect::<Result<_, _>>()?;
                let mut it = flat.into_iter();
                TrainedAgents::Specialist(
                    config
                        .seeds
                        .iter()
                        .map(|_| it.by_ref().take(contexts.len()).collect())
                        .collect(),
                )
            }
            AgentKind::Random => TrainedAgents::Random,
            AgentKind::Oracle => TrainedAgents::Oracle,
        })
    }

    /// Rebuilds agents from snapshots, matching seeds by the recorded base
    /// seed and specialists by context name.
    pub fn from_snapshots(
        config: &EvalConfig,
        kind: AgentKind,
        snapshots: &[AgentSnapshot],
    ) -> Result<Self, HarnessError> {
        let contexts = config.resolve_contexts()?;
        let of_kind: Vec<&AgentSnapshot> = snapshots
            .iter()
            .filter(|s| s.label == kind.as_str())
            .collect();
        let find = |seed: u64, ctx: Option<&str>| -> Result<&AgentSnapshot, HarnessError> {
            of_kind
                .iter()
                .find(|s| s.rng.base_seed == seed && s.context.as_deref() == ctx)
                .copied()
                .ok_or_else(|| {
                    HarnessError::MissingSnapshot(format!(
                        "{} seed {seed}{}",
                        kind.as_str(),
                        ctx.map(|c| format!(" context {c}")).unwrap_or_default()
                    ))
                })
        };
        let load = |snap: &AgentSnapshot, episodes: usize| -> Result<TabularQ, HarnessError> {
            let q = TabularQ::from_snapshot(snap)?;
            let expected = config
                .training
                .train_config(episodes, config.gamma, config.max_steps);
            if q.config() != &expected {
                return Err(HarnessError::SnapshotMismatch {
                    label: snap.label.clone(),
                    reason: "hyperparameters differ from the config".into(),
                });
            }
            Ok(q)
        };
        Ok(match kind {
            AgentKind::Generalist => TrainedAgents::Generalist(
                config
                    .seeds
                    .iter()
                    .map(|&s| load(find(s, None)?, config.training.generalist_episodes))
                    .collect::<Result<_, _>>()?,
            ),
            AgentKind::Specialist => TrainedAgents::Specialist(
                config
                    .seeds
                    .iter()
                    .map(|&s| {
                        contexts
                            .iter()
                            .map(|c| {
                                load(find(s, Some(&c.id))?, config.training.specialist_episodes)
                            })
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<_, _>>()?,
            ),
            AgentKind::Random => {
                for &s in &config.seeds {
                    let snap = find(s, None)?;
                    let SnapshotBody::Random {
                        rollouts,
                        gamma,
                        max_steps,
                    } = snap.agent
                    else {
                        return Err(HarnessError::SnapshotMismatch {
                            label: snap.label.clone(),
                            reason: "not a random-policy snapshot".into(),
                        });
                    };
                    if rollouts != config.episodes_per_evaluation
                        || gamma != config.gamma
                        || max_steps != config.max_steps
                    {
                        return Err(HarnessError::SnapshotMismatch {
                            label: snap.label.clone(),
                            reason: "settings differ from the config".into(),
                        });
                    }
                }
                TrainedAgents::Random
            }
            AgentKind::Oracle => TrainedAgents::Oracle,
        })
    }

    /// Snapshots of every trained agent, in seed-then-context order.
    pub fn snapshots(&self, config: &EvalConfig) -> Result<Vec<AgentSnapshot>, HarnessError> {
        let contexts = config.resolve_contexts()?;
        Ok(match self {
            TrainedAgents::Generalist(qs) => {
                qs.iter().map(|q| q.snapshot("generalist", None)).collect()
            }
            TrainedAgents::Specialist(qs) => qs
                .iter()
                .flat_map(|per_seed| {
                    per_seed
                        .iter()
                        .zip(&contexts)
                        .map(|(q, c)| q.snapshot("specialist", Some(&c.id)))
                })
                .collect(),
            TrainedAgents::Random => config
                .seeds
                .iter()
                .map(|&s| {
                    AgentSnapshot::random(
                        "random",
                        config.episodes_per_evaluation,
                        config.gamma,
                        config.max_steps,
                        seed_stream(s, STREAM_RANDOM),
                    )
                })
                .collect(),
            TrainedAgents::Oracle => Vec::new(),
        })
    }

    /// Scores these agents on every (seed × context) cell.
    pub fn evaluate(
        &self,
        config: &EvalConfig,
        references: &[ReferenceFront],
    ) -> Result<EvalReport, HarnessError> {
        let contexts = config.resolve_contexts()?;
        let cells: Vec<(usize, usize)> = (0..config.seeds.len())
            .flat_map(|si| (0..contexts.len()).map(move |ci| (si, ci)))
            .collect();
        let flat: Vec<ParetoFront> = cells
            .par_iter()
            .map(|&(si, ci)| {
                let ctx = &contexts[ci];
                match self {
                    TrainedAgents::Generalist(qs) => sweep_front(config, &qs[si], ctx),
                    TrainedAgents::Specialist(qs) => sweep_front(config, &qs[si][ci], ctx),
                    TrainedAgents::Random => random_front(config, config.seeds[si], ci, ctx),
                    TrainedAgents::Oracle => Ok(references[ci].front.clone()),
                }
            })
            .collect::<Result<_, _>>()?;
        let mut it = flat.into_iter();
        let fronts = config
            .seeds
            .iter()
            .map(|_| it.by_ref().take(contexts.len()).collect())
            .collect();
        assemble_report(config, references, self.kind(), fronts)
    }
}

pub fn evaluate_generalist(config: &EvalConfig) -> Result<EvalReport, HarnessError> {
    evaluate_kind(config, AgentKind::Generalist)
}

pub fn evaluate_specialists(config: &EvalConfig) -> Result<EvalReport, HarnessError> {
    evaluate_kind(config, AgentKind::Specialist)
}

pub fn evaluate_random(config: &EvalConfig) -> Result<EvalReport, HarnessError> {
    evaluate_kind(config, AgentKind::Random)
}

fn evaluate_kind(config: &EvalConfig, kind: AgentKind) -> Result<EvalReport, HarnessError> {
    let refs = make_reference_fronts(config)?;
    TrainedAgents::train(config, kind)?.evaluate(config, &refs)
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `report-<agent>.json`, `report-<agent>.csv`, one CSV per cell
/// under `fronts/<agent>/` and the reference fronts under
/// `fronts/reference/`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<(), HarnessError> {
    let agent = report.agent.as_str();
    write_file(&dir.join(format!("report-{agent}.json")), &report.to_json())?;
    write_file(&dir.join(format!("report-{agent}.csv")), &report.to_csv())?;
    for c in &report.cells {
        let path = dir
            .join("fronts")
            .join(agent)
            .join(format!("seed-{}", c.seed))
            .join(format!("{}.csv", file_stem(&c.context)));
        write_file(&path, &front_to_csv(&c.front))?;
    }
    for r in &report.references {
        write_file(
            &dir.join("fronts")
                .join("reference")
                .join(format!("{}.csv", file_stem(&r.context))),
            &front_to_csv(&r.front),
        )?;
    }
    Ok(())
}

fn cell_or_dash(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// IQM and optimality gap of NHGR and EUGR, one row per report.
pub fn summary_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>9} {:>9} {:>9} {:>9}",
        "agent", "NHGR IQM", "NHGR gap", "EUGR IQM", "EUGR gap"
    );
    for r in reports {
        let a = &r.aggregates;
        let _ = writeln!(
            out,
            "{:<12} {:>9} {:>9} {:>9} {:>9}",
            r.agent.as_str(),
            cell_or_dash(a.nhgr.as_ref().map(|s| s.iqm)),
            cell_or_dash(a.nhgr.as_ref().map(|s| s.optimality_gap)),
            cell_or_dash(a.eugr.as_ref().map(|s| s.iqm)),
            cell_or_dash(a.eugr.as_ref().map(|s| s.optimality_gap)),
        );
    }
    out
}

/// Per-context means over seeds of HV, EUM, NHGR and EUGR, followed by the
/// pooled aggregates.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "agent: {}   seeds: {}   contexts: {}",
        report.agent.as_str(),
        report.config.seeds.len(),
        report.references.len()
    );
    let _ = writeln!(
        out,
        "{:<16} {:<18} {:>12} {:>10} {:>7} {:>7}",
        "context", "reference", "HV", "EUM", "NHGR", "EUGR"
    );
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    for r in &report.references {
        let cells: Vec<&Cell> = report
            .cells
            .iter()
            .filter(|c| c.context == r.context)
            .collect();
        let hv = mean(cells.iter().map(|c| c.hypervolume).collect());
        let eum = mean(cells.iter().map(|c| c.eum).collect());
        let nhgr = mean(cells.iter().filter_map(|c| c.nhgr).collect());
        let eugr = mean(cells.iter().filter_map(|c| c.eugr).collect());
        let _ = writeln!(
            out,
            "{:<16} {:<18} {:>12} {:>10} {:>7} {:>7}",
            r.context,
            r.provenance.as_str(),
            hv.map_or("-".into(), |x| format!("{x:.1}")),
            eum.map_or("-".into(), |x| format!("{x:.3}")),
            cell_or_dash(nhgr),
            cell_or_dash(eugr)
        );
    }
    let a = Aggregates::of(&report.cells);
    for (name, s) in [("NHGR", &a.nhgr), ("EUGR", &a.eugr)] {
        match s {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{name}: IQM {:.3}  optimality gap {:.3}  ({} cells)",
                    s.iqm, s.optimality_gap, s.cells
                );
            }
            None => {
                let _ = writeln!(out, "{name}: no scorable cells");
            }
        }
    }
    for e in &report.excluded_contexts {
        let _ = writeln!(out, "excluded {}: {}", e.context, e.reason);
    }
    out
}
