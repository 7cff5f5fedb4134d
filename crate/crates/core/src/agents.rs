//! Desk-scale baselines.
//!
//! [`TabularQ`] is a family of Q-tables, one per entry of a [`WeightGrid`],
//! each learning the linearly scalarized reward `wᵀr`. Trained on a fixed
//! context it is a specialist; trained on a fresh randomized context every
//! episode it is a generalist. Tables are keyed by an observation
//! [`Digest`]; for the gridworld that is the agent pose plus the
//! collected-goal mask, so a generalist shares one table across all the
//! layouts it sees.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{RandomStream, RNG_NAME};
use crate::lavagrid::{LavaGridContext, LavaGridEnv, LavaGridObs, RandomizationSpace, NUM_ACTIONS};
use crate::momdp::{
    discounted_return, domain_randomization_sampler, rollout, EnvError, Environment,
};
use crate::pareto::{
    dominates_raw, dot, pareto_filter, pareto_indices, ParetoError, ParetoFront, ValueVector,
    WeightVector,
};

pub const SNAPSHOT_FORMAT: &str = "morlgen-agent";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("weight grid is empty")]
    EmptyWeightGrid,
    #[error("training needs at least one episode")]
    NoEpisodes,
    #[error("weight index {index} out of range for a grid of {len}")]
    WeightIndex { index: usize, len: usize },
    #[error("observation digest {digest} outside a table of {states} states")]
    DigestOutOfRange { digest: usize, states: usize },
    #[error("table covers a {table_w}x{table_h} grid, context is {ctx_w}x{ctx_h}")]
    GridMismatch {
        table_w: usize,
        table_h: usize,
        ctx_w: usize,
        ctx_h: usize,
    },
    #[error("table has {table} actions, environment has {env}")]
    ActionMismatch { table: usize, env: usize },
    #[error("random baseline needs at least one rollout")]
    NoRollouts,
    #[error("context sampling failed: {0}")]
    Sampling(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
}

/// Dense state index of an observation.
pub trait Digest {
    fn digest(&self) -> usize;
}

/// `((y·width + x)·4 + dir)·8 + collected`. The layout and the weights are
/// deliberately left out.
impl Digest for LavaGridObs {
    fn digest(&self) -> usize {
        ((self.y * self.width + self.x) * 4 + self.dir as usize) * 8 + self.collected as usize
    }
}

/// Number of distinct gridworld digests on a `width × height` grid.
pub fn lavagrid_states(width: usize, height: usize) -> usize {
    width * height * 4 * 8
}

/// All compositions of `resolution` into `k` parts, divided by `resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrid {
    weights: Vec<WeightVector>,
}

impl WeightGrid {
    pub fn new(k: usize, resolution: usize) -> Result<Self, AgentError> {
        if k == 0 || resolution == 0 {
            return Err(AgentError::EmptyWeightGrid);
        }
        let mut parts = Vec::new();
        compositions(resolution, k, &mut Vec::new(), &mut parts);
        let weights = parts
            .into_iter()
            .map(|p| {
                WeightVector::new(
                    p.into_iter()
                        .map(|c| c as f64 / resolution as f64)
                        .collect(),
                )
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { weights })
    }

    /// A grid of explicit weights, e.g. a single preference.
    pub fn from_weights(weights: Vec<WeightVector>) -> Result<Self, AgentError> {
        if weights.is_empty() {
            return Err(AgentError::EmptyWeightGrid);
        }
        let k = weights[0].dim();
        if let Some(w) = weights.iter().find(|w| w.dim() != k) {
            return Err(ParetoError::DimensionMismatch {
                expected: k,
                got: w.dim(),
            }
            .into());
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[WeightVector] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.weights[0].dim()
    }
}

fn compositions(
    remaining: usize,
    parts: usize,
    prefix: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if parts == 1 {
        let mut p = prefix.clone();
        p.push(remaining);
        out.push(p);
        return;
    }
    for first in (0..=remaining).rev() {
        prefix.push(first);
        compositions(remaining - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

/// Q-learning settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which ε is annealed linearly.
    pub anneal_fraction: f64,
    pub max_steps: usize,
    pub weight_resolution: usize,
    /// Update every weight's table from each transition (Q-learning is
    /// off-policy); the sampled weight only drives behavior. When false only
    /// the sampled weight's table learns.
    pub shared_experience: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            gamma: crate::lavagrid::DEFAULT_GAMMA,
            alpha: 0.1,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            anneal_fraction: 0.8,
            max_steps: crate::lavagrid::DEFAULT_MAX_STEPS,
            weight_resolution: 10,
            shared_experience: true,
        }
    }
}

impl TrainConfig {
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        let span = (self.anneal_fraction * self.episodes as f64).max(1.0);
        let frac = (episode as f64 / span).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn weight_grid(&self, k: usize) -> Result<WeightGrid, AgentError> {
        WeightGrid::new(k, self.weight_resolution)
    }
}

/// Where training contexts come from.
#[derive(Debug, Clone)]
pub enum ContextSource {
    Fixed(LavaGridContext),
    Randomized(RandomizationSpace),
}

impl ContextSource {
    fn dims(&self) -> (usize, usize) {
        match self {
            ContextSource::Fixed(c) => (c.layout.width(), c.layout.height()),
            ContextSource::Randomized(s) => s.dims(),
        }
    }
}

/// Weight-conditioned family of Q-tables over observation digests.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    states: usize,
    actions: usize,
    /// Gridworld shape the digests refer to, when trained on one.
    grid_dims: Option<(usize, usize)>,
    grid: WeightGrid,
    config: TrainConfig,
    stream: RandomStream,
    /// `tables[w][digest * actions + a]`.
    tables: Vec<Vec<f64>>,
    /// Summed discounted training return per weight, with episode counts.
    training_returns: Vec<(Vec<f64>, usize)>,
}

impl TabularQ {
    pub fn new(
        states: usize,
        actions: usize,
        grid: WeightGrid,
        config: TrainConfig,
        stream: RandomStream,
    ) -> Self {
        let k = grid.dim();
        Self {
            states,
            actions,
            grid_dims: None,
            tables: vec![vec![0.0; states * actions]; grid.len()],
            training_returns: vec![(vec![0.0; k], 0); grid.len()],
            grid,
            config,
            stream,
        }
    }

    pub fn for_lavagrid(
        width: usize,
        height: usize,
        grid: WeightGrid,
        config: TrainConfig,
        stream: RandomStream,
    ) -> Self {
        let mut q = Self::new(
            lavagrid_states(width, height),
            NUM_ACTIONS,
            grid,
            config,
            stream,
        );
        q.grid_dims = Some((width, height));
        q
    }

    pub fn grid(&self) -> &WeightGrid {
        &self.grid
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn grid_dims(&self) -> Option<(usize, usize)> {
        self.grid_dims
    }

    /// Q-values of one state; an out-of-range digest reads as unvisited.
    pub fn q_values(&self, weight: usize, digest: usize) -> &[f64] {
        if digest >= self.states {
            return &ZEROS[..self.actions.min(ZEROS.len())];
        }
        let base = digest * self.actions;
        &self.tables[weight][base..base + self.actions]
    }

    /// Greedy action; ties go to the lowest action index.
    pub fn greedy(&self, weight: usize, digest: usize) -> usize {
        let q = self.q_values(weight, digest);
        let mut best = 0;
        for a in 1..q.len() {
            if q[a] > q[best] {
                best = a;
            }
        }
        best
    }

    /// Mean discounted training return observed under each weight.
    pub fn training_returns(&self) -> Vec<Option<Vec<f64>>> {
        self.training_returns
            .iter()
            .map(|(sum, n)| (*n > 0).then(|| sum.iter().map(|s| s / *n as f64).collect()))
            .collect()
    }

    fn check_context(&self, ctx: &LavaGridContext) -> Result<(), AgentError> {
        let (w, h) = (ctx.layout.width(), ctx.layout.height());
        match self.grid_dims {
            Some((tw, th)) if (tw, th) != (w, h) => Err(AgentError::GridMismatch {
                table_w: tw,
                table_h: th,
                ctx_w: w,
                ctx_h: h,
            }),
            None if self.states != lavagrid_states(w, h) => Err(AgentError::DigestOutOfRange {
                digest: lavagrid_states(w, h),
                states: self.states,
            }),
            _ => Ok(()),
        }
    }

    fn check_weight(&self, weight: usize) -> Result<(), AgentError> {
        if weight >= self.grid.len() {
            return Err(AgentError::WeightIndex {
                index: weight,
                len: self.grid.len(),
            });
        }
        Ok(())
    }

    /// One-step TD update toward `wᵀr + γ·max_a′ Q(s′, a′)`; the bootstrap
    /// term is dropped on terminal transitions.
    pub fn td_update(
        &mut self,
        weight: usize,
        s: usize,
        a: usize,
        reward: &[f64],
        next: usize,
        terminal: bool,
    ) {
        let (alpha, gamma, n) = (self.config.alpha, self.config.gamma, self.actions);
        let u = dot(reward, self.grid.weights[weight].as_slice());
        let table = &mut self.tables[weight];
        let bootstrap = if terminal {
            0.0
        } else {
            table[next * n..next * n + n]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let q = &mut table[s * n + a];
        *q += alpha * (u + gamma * bootstrap - *q);
    }
}

const ZEROS: [f64; 16] = [0.0; 16];

/// ε-greedy scalarized Q-learning on any environment with digestible
/// observations. Episode `e` is played in `context_for(e)` under a weight
/// index drawn uniformly from the grid. Hitting `max_steps` (or the
/// environment's own truncation) bootstraps; termination does not.
pub fn train_scalarized_q_with<E, F>(
    env: &mut E,
    mut context_for: F,
    states: usize,
    grid: &WeightGrid,
    config: &TrainConfig,
    stream: RandomStream,
) -> Result<TabularQ, AgentError>
where
    E: Environment,
    E::Observation: Digest,
    F: FnMut(usize) -> Result<E::Context, AgentError>,
{
    if grid.is_empty() {
        return Err(AgentError::EmptyWeightGrid);
    }
    if config.episodes == 0 {
        return Err(AgentError::NoEpisodes);
    }
    if config.max_steps == 0 {
        return Err(EnvError::ZeroSteps.into());
    }
    if !(0.0..1.0).contains(&config.gamma) {
        return Err(EnvError::InvalidDiscount(config.gamma).into());
    }
    if grid.dim() != env.num_objectives() {
        return Err(ParetoError::DimensionMismatch {
            expected: env.num_objectives(),
            got: grid.dim(),
        }
        .into());
    }
    let actions = env.action_count();
    if actions == 0 || actions > ZEROS.len() {
        return Err(AgentError::ActionMismatch {
            table: ZEROS.len(),
            env: actions,
        });
    }
    let mut q = TabularQ::new(states, actions, grid.clone(), config.clone(), stream);
    let mut rng = stream.derive(0).rng();
    let env_streams = stream.derive(2);
    let n_weights = grid.len();
    let checked = |d: usize| {
        if d < states {
            Ok(d)
        } else {
            Err(AgentError::DigestOutOfRange { digest: d, states })
        }
    };
    let mut rewards: Vec<Vec<f64>> = Vec::new();
    for episode in 0..config.episodes {
        let ctx = context_for(episode)?;
        let weight = rng.gen_range(0..n_weights);
        let eps = config.epsilon_at(episode);
        let mut s = checked(
            env.reset(&ctx, env_streams.derive(episode as u64))?
                .digest(),
        )?;
        rewards.clear();
        for _ in 0..config.max_steps {
            let a = if rng.gen::<f64>() < eps {
                rng.gen_range(0..actions)
            } else {
                q.greedy(weight, s)
            };
            let t = env.step(a)?;
            let next = checked(t.next_observation.digest())?;
            if config.shared_experience {
                for wi in 0..n_weights {
                    q.td_update(wi, s, a, &t.reward, next, t.terminal);
                }
            } else {
                q.td_update(weight, s, a, &t.reward, next, t.terminal);
            }
            let done = t.done();
            rewards.push(t.reward);
            s = next;
            if done {
                break;
            }
        }
        let ret = discounted_return(&rewards, config.gamma, grid.dim());
        let (sum, count) = &mut q.training_returns[weight];
        for (acc, r) in sum.iter_mut().zip(ret) {
            *acc += r;
        }
        *count += 1;
    }
    Ok(q)
}

/// Gridworld training: a fixed context makes a specialist, a randomization
/// space (fresh context per episode) a generalist.
pub fn train_scalarized_q(
    source: &ContextSource,
    grid: &WeightGrid,
    config: &TrainConfig,
    stream: RandomStream,
) -> Result<TabularQ, AgentError> {
    let (w, h) = source.dims();
    let mut env = LavaGridEnv::new(config.max_steps.max(1));
    let contexts = stream.derive(1);
    let context_for = |episode: usize| -> Result<LavaGridContext, AgentError> {
        let ctx = match source {
            ContextSource::Fixed(c) => c.clone(),
            ContextSource::Randomized(space) => {
                domain_randomization_sampler(space, contexts.derive(episode as u64))
                    .map_err(|e| AgentError::Sampling(e.to_string()))?
            }
        };
        if (ctx.layout.width(), ctx.layout.height()) != (w, h) {
            return Err(AgentError::GridMismatch {
                table_w: w,
                table_h: h,
                ctx_w: ctx.layout.width(),
                ctx_h: ctx.layout.height(),
            });
        }
        Ok(ctx)
    };
    let mut q = train_scalarized_q_with(
        &mut env,
        context_for,
        lavagrid_states(w, h),
        grid,
        config,
        stream,
    )?;
    q.grid_dims = Some((w, h));
    Ok(q)
}

/// Discounted vector return of the greedy policy for one grid weight, over
/// at most the table's `max_steps`.
pub fn greedy_value_vector(
    q: &TabularQ,
    weight: usize,
    ctx: &LavaGridContext,
    gamma: f64,
    stream: RandomStream,
) -> Result<ValueVector, AgentError> {
    q.check_weight(weight)?;
    q.check_context(ctx)?;
    if q.actions != NUM_ACTIONS {
        return Err(AgentError::ActionMismatch {
            table: q.actions,
            env: NUM_ACTIONS,
        });
    }
    let max_steps = q.config.max_steps;
    let mut env = LavaGridEnv::new(max_steps);
    Ok(rollout(
        &mut env,
        |o: &LavaGridObs| q.greedy(weight, o.digest()),
        ctx,
        gamma,
        stream,
        max_steps,
    )?)
}

/// A front whose points remember the grid weight that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentFront {
    pub front: ParetoFront,
    /// Aligned with `front.points()`.
    pub weight_indices: Vec<usize>,
    /// Every evaluated vector, indexed by weight.
    pub evaluated: Vec<ValueVector>,
}

/// Greedy vectors for the first `limit` grid weights (all when `None`),
/// Pareto-filtered.
pub fn build_front(
    q: &TabularQ,
    ctx: &LavaGridContext,
    gamma: f64,
    limit: Option<usize>,
) -> Result<AgentFront, AgentError> {
    let n = limit.map_or(q.grid.len(), |l| l.min(q.grid.len()));
    let stream = q.stream.derive(3);
    let evaluated: Vec<ValueVector> = (0..n)
        .map(|w| greedy_value_vector(q, w, ctx, gamma, stream))
        .collect::<Result<_, _>>()?;
    let weight_indices = pareto_indices(&evaluated)?;
    let front = pareto_filter(&evaluated)?;
    Ok(AgentFront {
        front,
        weight_indices,
        evaluated,
    })
}

/// `n` uniformly random rollouts, Pareto-filtered.
pub fn random_policy_front(
    ctx: &LavaGridContext,
    n: usize,
    gamma: f64,
    max_steps: usize,
    stream: RandomStream,
) -> Result<ParetoFront, AgentError> {
    if n == 0 {
        return Err(AgentError::NoRollouts);
    }
    let mut env = LavaGridEnv::new(max_steps);
    let mut vectors = Vec::with_capacity(n);
    for i in 0..n {
        let episode = stream.derive(i as u64);
        let mut rng = episode.rng();
        vectors.push(rollout(
            &mut env,
            |_| rng.gen_range(0..NUM_ACTIONS),
            ctx,
            gamma,
            episode,
            max_steps,
        )?);
    }
    Ok(pareto_filter(&vectors)?)
}

/// Per-context Pareto archive. Dominance is only ever checked between
/// entries of the same context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextTaggedArchive<H> {
    fronts: BTreeMap<String, Vec<(ValueVector, H)>>,
}

impl<H> Default for ContextTaggedArchive<H> {
    fn default() -> Self {
        Self {
            fronts: BTreeMap::new(),
        }
    }
}

impl<H> ContextTaggedArchive<H> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts unless an entry of the same context equals or dominates
    /// `value`; evicts the entries of that context that `value` dominates.
    pub fn insert(
        &mut self,
        context: &str,
        value: ValueVector,
        handle: H,
    ) -> Result<bool, AgentError> {
        let entries = self.fronts.entry(context.to_string()).or_default();
        if let Some((first, _)) = entries.first() {
            if first.dim() != value.dim() {
                return Err(ParetoError::DimensionMismatch {
                    expected: first.dim(),
                    got: value.dim(),
                }
                .into());
            }
        }
        if entries
            .iter()
            .any(|(q, _)| q == &value || dominates_raw(q.as_slice(), value.as_slice()))
        {
            return Ok(false);
        }
        entries.retain(|(q, _)| !dominates_raw(value.as_slice(), q.as_slice()));
        entries.push((value, handle));
        Ok(true)
    }

    pub fn entries(&self, context: &str) -> &[(ValueVector, H)] {
        self.fronts.get(context).map_or(&[], Vec::as_slice)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &str> {
        self.fronts.keys().map(String::as_str)
    }

    pub fn front(&self, context: &str) -> ParetoFront {
        let pts: Vec<ValueVector> = self
            .entries(context)
            .iter()
            .map(|(v, _)| v.clone())
            .collect();
        pareto_filter(&pts).expect("archive entries share a dimension")
    }
}

/// Free-function form of [`ContextTaggedArchive::insert`].
pub fn archive_insert<H>(
    archive: &mut ContextTaggedArchive<H>,
    context: &str,
    value: ValueVector,
    handle: H,
) -> Result<bool, AgentError> {
    archive.insert(context, value, handle)
}

/// Versioned on-disk form of an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSnapshot {
    pub format: String,
    pub version: u32,
    pub label: String,
    /// Context the agent was specialized to; `None` for generalists.
    pub context: Option<String>,
    pub rng: RngMeta,
    pub agent: SnapshotBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngMeta {
    pub generator: String,
    pub base_seed: u64,
    pub stream_id: u64,
}

impl From<RandomStream> for RngMeta {
    fn from(s: RandomStream) -> Self {
        Self {
            generator: RNG_NAME.to_string(),
            base_seed: s.base_seed,
            stream_id: s.stream_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SnapshotBody {
    ScalarizedQ {
        states: usize,
        actions: usize,
        grid_dims: Option<(usize, usize)>,
        weights: Vec<WeightVector>,
        hyperparameters: TrainConfig,
        training_returns: Vec<TrainingReturn>,
        /// Nonzero entries as `[weight, digest, action, value]`.
        entries: Vec<(usize, usize, usize, f64)>,
    },
    Random {
        rollouts: usize,
        gamma: f64,
        max_steps: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingReturn {
    pub episodes: usize,
    pub sum: Vec<f64>,
}

impl TabularQ {
    pub fn snapshot(&self, label: &str, context: Option<&str>) -> AgentSnapshot {
        let mut entries = Vec::new();
        for (wi, table) in self.tables.iter().enumerate() {
            for (i, &v) in table.iter().enumerate() {
                if v != 0.0 {
                    entries.push((wi, i / self.actions, i % self.actions, v));
                }
            }
        }
        AgentSnapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            label: label.to_string(),
            context: context.map(str::to_string),
            rng: self.stream.into(),
            agent: SnapshotBody::ScalarizedQ {
                states: self.states,
                actions: self.actions,
                grid_dims: self.grid_dims,
                weights: self.grid.weights.clone(),
                hyperparameters: self.config.clone(),
                training_returns: self
                    .training_returns
                    .iter()
                    .map(|(sum, n)| TrainingReturn {
                        episodes: *n,
                        sum: sum.clone(),
                    })
                    .collect(),
                entries,
            },
        }
    }

    pub fn from_snapshot(snap: &AgentSnapshot) -> Result<Self, AgentError> {
        snap.check_header()?;
        let SnapshotBody::ScalarizedQ {
            states,
            actions,
            grid_dims,
            weights,
            hyperparameters,
            training_returns,
            entries,
        } = &snap.agent
        else {
            return Err(AgentError::Snapshot("not a scalarized-q snapshot".into()));
        };
        let bad = |m: &str| AgentError::Snapshot(m.to_string());
        let grid = WeightGrid::from_weights(weights.clone())?;
        if *actions == 0 || *actions > ZEROS.len() {
            return Err(bad("action count out of range"));
        }
        if grid_dims.is_some_and(|(w, h)| lavagrid_states(w, h) != *states) {
            return Err(bad("grid shape does not match the state count"));
        }
        let stream = RandomStream::new(snap.rng.base_seed, snap.rng.stream_id);
        let mut q = TabularQ::new(*states, *actions, grid, hyperparameters.clone(), stream);
        q.grid_dims = *grid_dims;
        if training_returns.len() != q.grid.len() {
            return Err(bad("training return count does not match the weight grid"));
        }
        for (slot, tr) in q.training_returns.iter_mut().zip(training_returns) {
            if tr.sum.len() != slot.0.len() || tr.sum.iter().any(|x| !x.is_finite()) {
                return Err(bad("malformed training return"));
            }
            *slot = (tr.sum.clone(), tr.episodes);
        }
        for &(wi, s, a, v) in entries {
            if wi >= q.grid.len() || s >= *states || a >= *actions || !v.is_finite() {
                return Err(AgentError::Snapshot(format!(
                    "entry out of range: {:?}",
                    (wi, s, a, v)
                )));
            }
            q.tables[wi][s * actions + a] = v;
        }
        Ok(q)
    }
}

impl AgentSnapshot {
    pub fn random(
        label: &str,
        rollouts: usize,
        gamma: f64,
        max_steps: usize,
        stream: RandomStream,
    ) -> Self {
        Self {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            label: label.to_string(),
            context: None,
            rng: stream.into(),
            agent: SnapshotBody::Random {
                rollouts,
                gamma,
                max_steps,
            },
        }
    }

    pub fn check_header(&self) -> Result<(), AgentError> {
        if self.format != SNAPSHOT_FORMAT || self.version != SNAPSHOT_VERSION {
            return Err(AgentError::Snapshot(format!(
                "unsupported snapshot {} v{} (expected {SNAPSHOT_FORMAT} v{SNAPSHOT_VERSION})",
                self.format, self.version
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshots serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, AgentError> {
        let snap: Self =
            serde_json::from_str(text).map_err(|e| AgentError::Snapshot(e.to_string()))?;
        snap.check_header()?;
        Ok(snap)
    }
}
