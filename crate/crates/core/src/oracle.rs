//! Exact Pareto fronts for lava gridworld contexts.
//!
//! [`pareto_backward_induction`] runs set-valued dynamic programming over the
//! time-expanded state `(pose, collected goals, t)`: the return set of a state
//! is the Pareto filter, over actions, of the immediate reward plus the
//! discounted return set of the successor. [`enumerate_returns`] simulates
//! every action sequence instead and serves as an independent check.
//!
//! Both keep a witness action sequence for every front point. Rewards are
//! folded backwards (`r + γ·V`) in both routes and in
//! [`crate::momdp::rollout`], so replaying a witness reproduces its vector
//! exactly.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::RandomStream;
use crate::lavagrid::{Action, GridState, LavaGridContext, LavaGridEnv, NUM_OBJECTIVES};
use crate::momdp::{discounted_return, replay_policy, rollout, EnvError};
use crate::pareto::{pareto_indices, ParetoError, ParetoFront, ValueVector};

/// Longest horizon accepted by [`enumerate_returns`].
pub const MAX_ENUMERATION_HORIZON: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("horizon must be positive")]
    ZeroHorizon,
    #[error("enumeration horizon {0} exceeds {MAX_ENUMERATION_HORIZON}")]
    HorizonTooLarge(usize),
    #[error("discount must lie in [0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("cap must be positive")]
    ZeroCap,
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("malformed witness file: {0}")]
    Witness(String),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

type Vec3 = [f64; NUM_OBJECTIVES];

/// A front with one witness action sequence per point.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFront {
    pub front: ParetoFront,
    /// Aligned with `front.points()`.
    pub witnesses: Vec<Vec<Action>>,
    pub gamma: f64,
    pub horizon: usize,
    /// Set when some return set was thinned to respect the cap.
    pub approximate: bool,
    /// Largest ε used by any thinning step (0 when exact).
    pub epsilon: f64,
}

impl OracleFront {
    fn from_candidates(
        cands: Vec<(Vec3, Vec<Action>)>,
        gamma: f64,
        horizon: usize,
        approximate: bool,
        epsilon: f64,
    ) -> Result<Self, OracleError> {
        let points: Vec<ValueVector> = cands
            .iter()
            .map(|(v, _)| ValueVector::new(v.to_vec()))
            .collect::<Result<_, _>>()?;
        let keep = pareto_indices(&points)?;
        let front = crate::pareto::pareto_filter(
            &keep.iter().map(|&i| points[i].clone()).collect::<Vec<_>>(),
        )?;
        let witnesses = keep.iter().map(|&i| cands[i].1.clone()).collect();
        Ok(Self {
            front,
            witnesses,
            gamma,
            horizon,
            approximate,
            epsilon,
        })
    }

    /// Sidecar document pairing each point with its witness string.
    pub fn witness_file(&self) -> WitnessFile {
        WitnessFile {
            gamma: self.gamma,
            horizon: self.horizon,
            approximate: self.approximate,
            epsilon: self.epsilon,
            points: self
                .front
                .points()
                .iter()
                .zip(&self.witnesses)
                .map(|(v, w)| WitnessEntry {
                    value: v.as_slice().to_vec(),
                    actions: actions_to_string(w),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessFile {
    pub gamma: f64,
    pub horizon: usize,
    pub approximate: bool,
    pub epsilon: f64,
    pub points: Vec<WitnessEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessEntry {
    pub value: Vec<f64>,
    /// One letter per step: `L` turn left, `R` turn right, `F` forward.
    pub actions: String,
}

pub fn actions_to_string(actions: &[Action]) -> String {
    actions.iter().map(|a| a.letter()).collect()
}

pub fn actions_from_string(s: &str) -> Result<Vec<Action>, OracleError> {
    s.chars()
        .map(|c| {
            Action::from_letter(c)
                .ok_or_else(|| OracleError::Witness(format!("unknown action letter {c:?}")))
        })
        .collect()
}

fn check_inputs(ctx: &LavaGridContext, gamma: f64) -> Result<(), OracleError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(OracleError::InvalidDiscount(gamma));
    }
    ctx.layout
        .validate()
        .map_err(|e| OracleError::InvalidContext(e.to_string()))
}

/// Plays `actions` through the environment (truncating at `horizon`) and
/// returns the discounted vector return.
pub fn replay_witness(
    ctx: &LavaGridContext,
    gamma: f64,
    horizon: usize,
    actions: &[Action],
) -> Result<ValueVector, OracleError> {
    if horizon == 0 || actions.is_empty() {
        return Ok(ValueVector::zeros(NUM_OBJECTIVES));
    }
    let idx: Vec<usize> = actions.iter().map(|&a| a as usize).collect();
    let mut env = LavaGridEnv::new(horizon);
    Ok(rollout(
        &mut env,
        replay_policy(&idx),
        ctx,
        gamma,
        RandomStream::new(0, 0),
        horizon,
    )?)
}

/// Exhaustive search over every action sequence of length `horizon`
/// (shorter when the episode terminates first).
pub fn enumerate_returns(
    ctx: &LavaGridContext,
    gamma: f64,
    horizon: usize,
) -> Result<OracleFront, OracleError> {
    check_inputs(ctx, gamma)?;
    if horizon > MAX_ENUMERATION_HORIZON {
        return Err(OracleError::HorizonTooLarge(horizon));
    }
    let mut archive: Vec<(Vec3, Vec<Action>)> = Vec::new();
    let mut rewards: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    let mut actions: Vec<Action> = Vec::with_capacity(horizon);
    let start = ctx.initial_state();
    if horizon == 0 || ctx.is_terminal(&start) {
        archive.push(([0.0; NUM_OBJECTIVES], Vec::new()));
    } else {
        dfs(
            ctx,
            gamma,
            horizon,
            start,
            &mut rewards,
            &mut actions,
            &mut archive,
        );
    }
    OracleFront::from_candidates(archive, gamma, horizon, false, 0.0)
}

fn dfs(
    ctx: &LavaGridContext,
    gamma: f64,
    horizon: usize,
    state: GridState,
    rewards: &mut Vec<Vec<f64>>,
    actions: &mut Vec<Action>,
    archive: &mut Vec<(Vec3, Vec<Action>)>,
) {
    for a in Action::ALL {
        let (next, r, terminal) = ctx.transition(&state, a);
        rewards.push(r.to_vec());
        actions.push(a);
        if terminal || actions.len() == horizon {
            let ret = discounted_return(rewards, gamma, NUM_OBJECTIVES);
            archive_insert(archive, [ret[0], ret[1], ret[2]], actions);
        } else {
            dfs(ctx, gamma, horizon, next, rewards, actions, archive);
        }
        rewards.pop();
        actions.pop();
    }
}

fn weakly_dominates(a: &Vec3, b: &Vec3) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

fn archive_insert(archive: &mut Vec<(Vec3, Vec<Action>)>, v: Vec3, actions: &[Action]) {
    if archive.iter().any(|(q, _)| weakly_dominates(q, &v)) {
        return;
    }
    archive.retain(|(q, _)| !weakly_dominates(&v, q));
    archive.push((v, actions.to_vec()));
}

/// Return set of one state: values plus, per value, the action taken and the
/// index of the continuation in the successor's set.
#[derive(Debug, Clone, Default)]
struct ReturnSet {
    values: Vec<Vec3>,
    back: Vec<(u8, u32)>,
    epsilon: f64,
}

impl ReturnSet {
    fn zero() -> Self {
        Self {
            values: vec![[0.0; NUM_OBJECTIVES]],
            back: vec![(u8::MAX, 0)],
            epsilon: 0.0,
        }
    }
}

/// How far `q` falls short of ε-dominating `p`.
fn deficit(q: &Vec3, p: &Vec3) -> f64 {
    (0..NUM_OBJECTIVES).map(|i| p[i] - q[i]).fold(0.0, f64::max)
}

/// Keeps `cap` points by farthest-point selection: start from the first
/// point in canonical order, then repeatedly add the point worst covered by
/// the kept set. Returns the kept indices (ascending) and the ε with which
/// they cover every input point.
fn thin(values: &[Vec3], cap: usize) -> (Vec<usize>, f64) {
    if values.len() <= cap {
        return ((0..values.len()).collect(), 0.0);
    }
    let mut kept = vec![0];
    let mut gap: Vec<f64> = values.iter().map(|p| deficit(&values[0], p)).collect();
    while kept.len() < cap {
        let (far, _) = gap
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &g)| {
                if g > best.1 {
                    (i, g)
                } else {
                    best
                }
            });
        kept.push(far);
        for (g, p) in gap.iter_mut().zip(values) {
            *g = g.min(deficit(&values[far], p));
        }
    }
    kept.sort_unstable();
    let eps = gap.iter().copied().fold(0.0, f64::max);
    (kept, eps)
}

fn lex_desc(a: &Vec3, b: &Vec3) -> std::cmp::Ordering {
    for i in 0..NUM_OBJECTIVES {
        match b[i].total_cmp(&a[i]) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

fn backup(
    ctx: &LavaGridContext,
    gamma: f64,
    s: &GridState,
    next_layer: &HashMap<GridState, usize>,
    next_sets: &[ReturnSet],
    cap: Option<usize>,
) -> ReturnSet {
    let mut cands: Vec<(Vec3, (u8, u32))> = Vec::new();
    for a in Action::ALL {
        let (next, r, _) = ctx.transition(s, a);
        let succ = &next_sets[next_layer[&next]];
        for (j, v) in succ.values.iter().enumerate() {
            let mut out = [0.0; NUM_OBJECTIVES];
            for i in 0..NUM_OBJECTIVES {
                out[i] = r[i] + gamma * v[i];
            }
            cands.push((out, (a as u8, j as u32)));
        }
    }
    cands.sort_by(|x, y| lex_desc(&x.0, &y.0));
    let mut kept: Vec<(Vec3, (u8, u32))> = Vec::new();
    for (v, b) in cands {
        if !kept.iter().any(|(q, _)| weakly_dominates(q, &v)) {
            kept.push((v, b));
        }
    }
    let mut epsilon = 0.0;
    if let Some(cap) = cap {
        if kept.len() > cap {
            let values: Vec<Vec3> = kept.iter().map(|k| k.0).collect();
            let (idx, eps) = thin(&values, cap);
            epsilon = eps;
            kept = idx.into_iter().map(|i| kept[i]).collect();
        }
    }
    ReturnSet {
        values: kept.iter().map(|k| k.0).collect(),
        back: kept.iter().map(|k| k.1).collect(),
        epsilon,
    }
}

/// Set-valued backward induction over `horizon` steps. With `cap = None`
/// the result is the exact front; otherwise any return set larger than
/// `cap` is thinned by ε-dominance and the result is flagged approximate.
pub fn pareto_backward_induction(
    ctx: &LavaGridContext,
    gamma: f64,
    horizon: usize,
    cap: Option<usize>,
) -> Result<OracleFront, OracleError> {
    check_inputs(ctx, gamma)?;
    if horizon == 0 {
        return Err(OracleError::ZeroHorizon);
    }
    if cap == Some(0) {
        return Err(OracleError::ZeroCap);
    }
    // forward reachability, one layer per time step
    let start = ctx.initial_state();
    let mut layers: Vec<Vec<GridState>> = vec![vec![start]];
    for t in 0..horizon {
        let mut next: Vec<GridState> = layers[t]
            .iter()
            .filter(|s| !ctx.is_terminal(s))
            .flat_map(|s| Action::ALL.map(|a| ctx.transition(s, a).0))
            .collect();
        next.sort();
        next.dedup();
        layers.push(next);
    }
    let index: Vec<HashMap<GridState, usize>> = layers
        .iter()
        .map(|l| l.iter().enumerate().map(|(i, s)| (*s, i)).collect())
        .collect();

    let mut backs: Vec<Vec<Vec<(u8, u32)>>> = vec![Vec::new(); horizon + 1];
    let mut sets: Vec<ReturnSet> = vec![ReturnSet::zero(); layers[horizon].len()];
    let mut epsilon: f64 = 0.0;
    for t in (0..horizon).rev() {
        let next_sets = &sets;
        let layer: Vec<ReturnSet> = layers[t]
            .par_iter()
            .map(|s| {
                if ctx.is_terminal(s) {
                    ReturnSet::zero()
                } else {
                    backup(ctx, gamma, s, &index[t + 1], next_sets, cap)
                }
            })
            .collect();
        epsilon = layer.iter().map(|r| r.epsilon).fold(epsilon, f64::max);
        backs[t + 1] = std::mem::take(&mut sets)
            .into_iter()
            .map(|r| r.back)
            .collect();
        sets = layer;
    }
    let root = sets.pop().expect("layer 0 holds the start state");

    let mut cands = Vec::with_capacity(root.values.len());
    for (i, v) in root.values.iter().enumerate() {
        let mut actions = Vec::new();
        let mut state = start;
        let (mut a, mut j) = root.back[i];
        let mut t = 0;
        while a != u8::MAX {
            let act = Action::from_index(a as usize).expect("stored action");
            actions.push(act);
            state = ctx.transition(&state, act).0;
            t += 1;
            (a, j) = backs[t][index[t][&state]][j as usize];
        }
        cands.push((*v, actions));
    }
    OracleFront::from_candidates(cands, gamma, horizon, epsilon > 0.0, epsilon)
}
