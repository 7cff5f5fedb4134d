//! The contextual multi-objective MDP contract.
//!
//! A context fixes the transition function, the reward function and the
//! initial state of an episode. Environments are reset into a context and
//! then stepped with discrete actions, emitting vector rewards.

use thiserror::Error;

use crate::aggregate::RandomStream;
use crate::pareto::{ParetoError, ValueVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
    #[error("step called after the episode ended")]
    EpisodeOver,
    #[error("action {action} out of range (environment has {count} actions)")]
    InvalidAction { action: usize, count: usize },
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("discount must lie in [0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("max_steps must be positive")]
    ZeroSteps,
    #[error(transparent)]
    Pareto(#[from] ParetoError),
}

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<O> {
    pub next_observation: O,
    pub reward: Vec<f64>,
    pub terminal: bool,
    pub truncated: bool,
}

impl<O> Transition<O> {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// A multi-objective environment parameterized by a context.
///
/// After a terminal or truncated transition, `step` fails with
/// [`EnvError::EpisodeOver`] until the next `reset`. Identical context,
/// stream and action sequence reproduce identical transitions.
pub trait Environment {
    type Context;
    type Observation;

    fn reset(
        &mut self,
        context: &Self::Context,
        stream: RandomStream,
    ) -> Result<Self::Observation, EnvError>;
    fn step(&mut self, action: usize) -> Result<Transition<Self::Observation>, EnvError>;
    fn num_objectives(&self) -> usize;
    fn action_count(&self) -> usize;
}

/// Draws contexts from a parameter space.
pub trait ContextSpace {
    type Context;
    type Error;

    fn sample(&self, stream: RandomStream) -> Result<Self::Context, Self::Error>;
}

/// One uniform draw from `space`. A fresh context per training episode is
/// what domain randomization amounts to.
pub fn domain_randomization_sampler<S: ContextSpace>(
    space: &S,
    stream: RandomStream,
) -> Result<S::Context, S::Error> {
    space.sample(stream)
}

/// `Σ_t γ^t r_{t+1}`, evaluated backwards as `r_1 + γ(r_2 + γ(…))`.
///
/// The backward form is the same arithmetic a Bellman backup performs, so
/// returns computed here and by the exact oracle agree bit for bit.
pub fn discounted_return(rewards: &[Vec<f64>], gamma: f64, k: usize) -> Vec<f64> {
    let mut acc = vec![0.0; k];
    for r in rewards.iter().rev() {
        for (a, &x) in acc.iter_mut().zip(r) {
            *a = x + gamma * *a;
        }
    }
    acc
}

/// Everything a rollout observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub actions: Vec<usize>,
    pub rewards: Vec<Vec<f64>>,
    pub terminal: bool,
    pub truncated: bool,
    pub discounted: ValueVector,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

fn check_discount(gamma: f64) -> Result<(), EnvError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(EnvError::InvalidDiscount(gamma));
    }
    Ok(())
}

/// Runs one episode and keeps the trace. Stops on terminal, on environment
/// truncation, or after `max_steps` steps (reported as truncated).
pub fn rollout_episode<E, P>(
    env: &mut E,
    mut policy: P,
    context: &E::Context,
    gamma: f64,
    stream: RandomStream,
    max_steps: usize,
) -> Result<Episode, EnvError>
where
    E: Environment,
    P: FnMut(&E::Observation) -> usize,
{
    check_discount(gamma)?;
    if max_steps == 0 {
        return Err(EnvError::ZeroSteps);
    }
    let k = env.num_objectives();
    let count = env.action_count();
    let mut obs = env.reset(context, stream)?;
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let (mut terminal, mut truncated) = (false, false);
    while actions.len() < max_steps {
        let action = policy(&obs);
        if action >= count {
            return Err(EnvError::InvalidAction { action, count });
        }
        let t = env.step(action)?;
        actions.push(action);
        rewards.push(t.reward);
        obs = t.next_observation;
        if t.terminal || t.truncated {
            terminal = t.terminal;
            truncated = t.truncated;
            break;
        }
    }
    if !terminal && !truncated {
        truncated = true;
    }
    let discounted = ValueVector::new(discounted_return(&rewards, gamma, k))?;
    Ok(Episode {
        actions,
        rewards,
        terminal,
        truncated,
        discounted,
    })
}

/// Discounted vector return of one episode.
pub fn rollout<E, P>(
    env: &mut E,
    policy: P,
    context: &E::Context,
    gamma: f64,
    stream: RandomStream,
    max_steps: usize,
) -> Result<ValueVector, EnvError>
where
    E: Environment,
    P: FnMut(&E::Observation) -> usize,
{
    rollout_episode(env, policy, context, gamma, stream, max_steps).map(|e| e.discounted)
}

/// Policy replaying a fixed action sequence, then repeating action 0.
pub fn replay_policy<O>(actions: &[usize]) -> impl FnMut(&O) -> usize + '_ {
    let mut i = 0;
    move |_| {
        let a = actions.get(i).copied().unwrap_or(0);
        i += 1;
        a
    }
}

#[cfg(test)]
pub(crate) mod scripted {
    //! A context-free environment that plays back a reward script.
    use super::*;

    pub struct Scripted {
        pub script: Vec<Vec<f64>>,
        pub pos: Option<usize>,
        pub done: bool,
    }

    impl Scripted {
        pub fn new(script: Vec<Vec<f64>>) -> Self {
            Self {
                script,
                pos: None,
                done: false,
            }
        }
    }

    impl Environment for Scripted {
        type Context = ();
        type Observation = usize;

        fn reset(&mut self, _: &(), _: RandomStream) -> Result<usize, EnvError> {
            self.pos = Some(0);
            self.done = false;
            Ok(0)
        }

        fn step(&mut self, action: usize) -> Result<Transition<usize>, EnvError> {
            let pos = self.pos.ok_or(EnvError::NotReset)?;
            if self.done {
                return Err(EnvError::EpisodeOver);
            }
            if action >= 2 {
                return Err(EnvError::InvalidAction { action, count: 2 });
            }
            let reward = self.script[pos].clone();
            self.pos = Some(pos + 1);
            let terminal = pos + 1 == self.script.len();
            self.done = terminal;
            Ok(Transition {
                next_observation: pos + 1,
                reward,
                terminal,
                truncated: false,
            })
        }

        fn num_objectives(&self) -> usize {
            self.script[0].len()
        }

        fn action_count(&self) -> usize {
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::scripted::Scripted;
    use super::*;

    const S: RandomStream = RandomStream {
        base_seed: 0,
        stream_id: 0,
    };

    #[test]
    fn single_reward_episode() {
        let mut env = Scripted::new(vec![vec![3.0, -1.0]]);
        let v = rollout(&mut env, |_| 0, &(), 0.99, S, 10).unwrap();
        assert_eq!(v.as_slice(), &[3.0, -1.0]);
    }

    #[test]
    fn two_step_discounting() {
        let mut env = Scripted::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let v = rollout(&mut env, |_| 1, &(), 0.5, S, 10).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 0.5]);
    }

    #[test]
    fn truncation_is_a_prefix_sum() {
        let script: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, -1.0]).collect();
        let full =
            rollout_episode(&mut Scripted::new(script.clone()), |_| 0, &(), 0.9, S, 8).unwrap();
        let cut = rollout_episode(&mut Scripted::new(script), |_| 0, &(), 0.9, S, 5).unwrap();
        assert!(full.terminal && !full.truncated);
        assert!(cut.truncated && !cut.terminal);
        assert_eq!(&full.rewards[..5], &cut.rewards[..]);
        // the remaining tail adds γ^5 times the tail's own return
        let tail = discounted_return(&full.rewards[5..], 0.9, 2);
        for (i, t) in tail.iter().enumerate() {
            let rebuilt = cut.discounted.as_slice()[i] + 0.9f64.powi(5) * t;
            assert!((rebuilt - full.discounted.as_slice()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_inputs() {
        let mut env = Scripted::new(vec![vec![1.0, 0.0]]);
        assert_eq!(
            rollout(&mut env, |_| 7, &(), 0.5, S, 3),
            Err(EnvError::InvalidAction {
                action: 7,
                count: 2
            })
        );
        assert_eq!(
            rollout(&mut env, |_| 0, &(), 1.0, S, 3),
            Err(EnvError::InvalidDiscount(1.0))
        );
        assert_eq!(
            rollout(&mut env, |_| 0, &(), 0.5, S, 0),
            Err(EnvError::ZeroSteps)
        );
        env.reset(&(), S).unwrap();
        env.step(0).unwrap();
        assert_eq!(env.step(0), Err(EnvError::EpisodeOver));
    }
}
