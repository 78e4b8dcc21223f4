//! Deterministic continuous-control MDPs with analytic dynamics and rewards,
//! plus a ground-truth value oracle via long discounted rollout.
//!
//! Three environments: a 2-D double-integrator (`point_mass`), a pendulum
//! swing-up (`pendulum`), and the 1-D `hillclimb` MDP whose reward is a
//! cubic ramp below zero glued to a quadratic bump function centered at 1.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Vec64;

/// One environment step: the unit stored in the replay buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec64,
    pub action: Vec64,
    pub reward: f64,
    pub next_state: Vec64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    PointMass,
    Pendulum,
    HillClimb,
}

#[derive(Clone, Debug)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub gamma: f64,
    pub action_low: Vec64,
    pub action_high: Vec64,
    pub episode_length: usize,
    /// Documented bound on |r| over the reachable state-action set.
    pub reward_bound: f64,
}

#[derive(Clone, Debug)]
pub struct Env {
    pub kind: EnvKind,
    pub spec: EnvSpec,
    /// Movement fraction per step for `hillclimb`; unused elsewhere.
    pub delta: f64,
}

const PM_DT: f64 = 0.1;
const PM_BOX: f64 = 5.0;
const PEND_DT: f64 = 0.05;
const PEND_G: f64 = 10.0;
const PEND_MAX_SPEED: f64 = 8.0;
const PEND_MAX_TORQUE: f64 = 2.0;

/// The compactly supported smooth bump exp(-x^4/(1-x^2)) on (-1, 1).
pub fn bump(x: f64) -> f64 {
    if x > -1.0 && x < 1.0 {
        (-x.powi(4) / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

/// hillclimb reward: s^3 below zero plus a bump centered at s = 1.
pub fn hillclimb_reward(s: f64) -> f64 {
    let cubic = if s < 0.0 { s * s * s } else { 0.0 };
    cubic + bump(s - 1.0)
}

impl Env {
    pub fn point_mass() -> Env {
        Env {
            kind: EnvKind::PointMass,
            spec: EnvSpec {
                name: "point_mass".into(),
                state_dim: 4,
                action_dim: 2,
                gamma: 0.99,
                action_low: vec![-1.0, -1.0],
                action_high: vec![1.0, 1.0],
                episode_length: 200,
                // max ||pos|| = sqrt(2)*5, plus the 0.01*||a||^2 penalty
                reward_bound: 7.1,
            },
            delta: 0.0,
        }
    }

    pub fn pendulum() -> Env {
        Env {
            kind: EnvKind::Pendulum,
            spec: EnvSpec {
                name: "pendulum".into(),
                state_dim: 3,
                action_dim: 1,
                gamma: 0.99,
                action_low: vec![-PEND_MAX_TORQUE],
                action_high: vec![PEND_MAX_TORQUE],
                episode_length: 200,
                // pi^2 + 0.1*8^2 + 0.001*2^2
                reward_bound: 16.3,
            },
            delta: 0.0,
        }
    }

    pub fn hillclimb() -> Env {
        Env::hillclimb_with_delta(0.1)
    }

    pub fn hillclimb_with_delta(delta: f64) -> Env {
        Env {
            kind: EnvKind::HillClimb,
            spec: EnvSpec {
                name: "hillclimb".into(),
                state_dim: 1,
                action_dim: 1,
                gamma: 0.99,
                action_low: vec![-1.0],
                action_high: vec![2.0],
                episode_length: 200,
                reward_bound: 1.0,
            },
            delta,
        }
    }

    pub fn by_name(name: &str) -> Result<Env> {
        match name {
            "point_mass" => Ok(Env::point_mass()),
            "pendulum" => Ok(Env::pendulum()),
            "hillclimb" => Ok(Env::hillclimb()),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec64 {
        action
            .iter()
            .zip(self.spec.action_low.iter().zip(self.spec.action_high.iter()))
            .map(|(a, (lo, hi))| a.clamp(*lo, *hi))
            .collect()
    }

    pub fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        let a = self.clip_action(action);
        match self.kind {
            EnvKind::PointMass => {
                let dist = (state[0] * state[0] + state[1] * state[1]).sqrt();
                let effort = a[0] * a[0] + a[1] * a[1];
                -dist - 0.01 * effort
            }
            EnvKind::Pendulum => {
                let theta = state[1].atan2(state[0]);
                let thdot = state[2];
                -(theta * theta + 0.1 * thdot * thdot + 0.001 * a[0] * a[0])
            }
            EnvKind::HillClimb => hillclimb_reward(state[0]),
        }
    }

    /// Deterministic step; the action is clipped to bounds first.
    pub fn step(&self, state: &[f64], action: &[f64]) -> Result<Transition> {
        if state.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("{} state", self.spec.name)));
        }
        if state.len() != self.spec.state_dim || action.len() != self.spec.action_dim {
            return Err(Error::DimensionMismatch(format!(
                "{}: state {} action {}",
                self.spec.name,
                state.len(),
                action.len()
            )));
        }
        let a = self.clip_action(action);
        let reward = self.reward(state, &a);
        let next_state = match self.kind {
            EnvKind::PointMass => {
                let (x, y, vx, vy) = (state[0], state[1], state[2], state[3]);
                vec![
                    (x + PM_DT * vx).clamp(-PM_BOX, PM_BOX),
                    (y + PM_DT * vy).clamp(-PM_BOX, PM_BOX),
                    (vx + PM_DT * a[0]).clamp(-PM_BOX, PM_BOX),
                    (vy + PM_DT * a[1]).clamp(-PM_BOX, PM_BOX),
                ]
            }
            EnvKind::Pendulum => {
                let theta = state[1].atan2(state[0]);
                let thdot = state[2];
                let new_thdot = (thdot
                    + (3.0 * PEND_G / 2.0 * theta.sin() + 3.0 * a[0]) * PEND_DT)
                    .clamp(-PEND_MAX_SPEED, PEND_MAX_SPEED);
                let new_theta = theta + new_thdot * PEND_DT;
                vec![new_theta.cos(), new_theta.sin(), new_thdot]
            }
            EnvKind::HillClimb => {
                let s = state[0];
                vec![(s + self.delta * (a[0] - s)).clamp(-1.0, 2.0)]
            }
        };
        Ok(Transition {
            state: state.to_vec(),
            action: a,
            reward,
            next_state,
        })
    }

    /// Sample from the initial state distribution.
    pub fn reset(&self, rng: &mut ChaCha8Rng) -> Vec64 {
        match self.kind {
            EnvKind::PointMass => vec![
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
            ],
            EnvKind::Pendulum => {
                let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                let thdot = rng.gen_range(-1.0..1.0);
                vec![theta.cos(), theta.sin(), thdot]
            }
            EnvKind::HillClimb => vec![rng.gen_range(-1.0..2.0)],
        }
    }

    /// Uniform random action within bounds (warmup exploration).
    pub fn random_action(&self, rng: &mut ChaCha8Rng) -> Vec64 {
        self.spec
            .action_low
            .iter()
            .zip(self.spec.action_high.iter())
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect()
    }

    /// V^pi(state) by truncated discounted rollout under the env's own gamma.
    pub fn true_value<P>(&self, policy: P, state: &[f64], tolerance: f64) -> f64
    where
        P: Fn(&[f64]) -> Vec64,
    {
        self.discounted_value(policy, state, self.spec.gamma, tolerance)
    }

    /// V^pi(state) under an arbitrary discount. Rollout length is chosen so
    /// the truncated tail gamma^T * R_max / (1 - gamma) is below `tolerance`.
    pub fn discounted_value<P>(&self, policy: P, state: &[f64], gamma: f64, tolerance: f64) -> f64
    where
        P: Fn(&[f64]) -> Vec64,
    {
        let horizon = self.oracle_horizon(gamma, tolerance);
        let mut s = state.to_vec();
        let mut value = 0.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            let a = policy(&s);
            let tr = self.step(&s, &a).expect("oracle rollout step");
            value += disc * tr.reward;
            disc *= gamma;
            s = tr.next_state;
        }
        value
    }

    /// Q^pi(state, action): first action fixed, then follow the policy.
    pub fn true_q<P>(&self, policy: P, state: &[f64], action: &[f64], gamma: f64, tol: f64) -> f64
    where
        P: Fn(&[f64]) -> Vec64,
    {
        let tr = self.step(state, action).expect("oracle q step");
        tr.reward + gamma * self.discounted_value(policy, &tr.next_state, gamma, tol)
    }

    pub fn oracle_horizon(&self, gamma: f64, tolerance: f64) -> usize {
        let r_max = self.spec.reward_bound;
        let bound = tolerance * (1.0 - gamma) / r_max;
        (bound.ln() / gamma.ln()).ceil().max(1.0) as usize
    }

    /// Play the policy for `n` steps, returning visited states s_0..s_n.
    pub fn rollout_states<P>(&self, policy: P, start: &[f64], n: usize) -> Vec<Vec64>
    where
        P: Fn(&[f64]) -> Vec64,
    {
        let mut states = Vec::with_capacity(n + 1);
        states.push(start.to_vec());
        for t in 0..n {
            let a = policy(&states[t]);
            let tr = self.step(&states[t], &a).expect("rollout step");
            states.push(tr.next_state);
        }
        states
    }
}
