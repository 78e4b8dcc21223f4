//! Deterministic policy gradient learner: actor and critic networks with
//! exponentially averaged target copies, a FIFO replay buffer, and
//! parameter-space exploration noise with an adaptive standard deviation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::envs::{EnvSpec, Transition};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Mlp, OutputActivation, Vec64};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub decay: f64,
    pub action_low: Vec64,
    pub action_high: Vec64,
}

impl AgentConfig {
    pub fn for_env(spec: &EnvSpec) -> AgentConfig {
        AgentConfig {
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
            hidden: vec![64, 64],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            decay: 1e-2,
            action_low: spec.action_low.clone(),
            action_high: spec.action_high.clone(),
        }
    }
}

/// Actor, critic, their target copies, and the two optimizers. The actor
/// net outputs in [-1, 1] (tanh head) and is mapped affinely onto the
/// action box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub decay: f64,
    pub action_low: Vec64,
    pub action_high: Vec64,
}

/// Affine map from the tanh head's [-1, 1] box onto [low, high].
pub fn scale_action(raw: &[f64], low: &[f64], high: &[f64]) -> Vec64 {
    raw.iter()
        .zip(low.iter().zip(high.iter()))
        .map(|(r, (lo, hi))| 0.5 * (lo + hi) + 0.5 * (hi - lo) * r)
        .collect()
}

impl Agent {
    /// Targets start equal to the live networks. The final actor layer is
    /// initialized 10x smaller so the initial policy is near the box center.
    pub fn new(cfg: &AgentConfig, seed: u64) -> Agent {
        let mut actor_sizes = vec![cfg.state_dim];
        actor_sizes.extend_from_slice(&cfg.hidden);
        actor_sizes.push(cfg.action_dim);
        let mut critic_sizes = vec![cfg.state_dim + cfg.action_dim];
        critic_sizes.extend_from_slice(&cfg.hidden);
        critic_sizes.push(1);
        let actor = Mlp::init_scaled(
            &actor_sizes,
            Activation::Tanh,
            OutputActivation::Tanh,
            0.1,
            seed.wrapping_mul(2).wrapping_add(1),
        );
        let critic = Mlp::init(
            &critic_sizes,
            Activation::Tanh,
            OutputActivation::Identity,
            seed.wrapping_mul(2).wrapping_add(2),
        );
        Agent {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: Adam::new(actor.param_count(), cfg.actor_lr),
            critic_opt: Adam::new(critic.param_count(), cfg.critic_lr),
            actor,
            critic,
            decay: cfg.decay,
            action_low: cfg.action_low.clone(),
            action_high: cfg.action_high.clone(),
        }
    }

    pub fn policy(&self, state: &[f64]) -> Vec64 {
        let raw = self.actor.forward(state).expect("actor forward");
        scale_action(&raw, &self.action_low, &self.action_high)
    }

    pub fn target_policy(&self, state: &[f64]) -> Vec64 {
        let raw = self.target_actor.forward(state).expect("target actor forward");
        scale_action(&raw, &self.action_low, &self.action_high)
    }

    pub fn q_value(&self, state: &[f64], action: &[f64]) -> f64 {
        let mut x = state.to_vec();
        x.extend_from_slice(action);
        self.critic.forward(&x).expect("critic forward")[0]
    }

    pub fn target_q_value(&self, state: &[f64], action: &[f64]) -> f64 {
        let mut x = state.to_vec();
        x.extend_from_slice(action);
        self.target_critic.forward(&x).expect("target critic forward")[0]
    }

    /// Gradient of mean_batch Q_phi(s, pi_theta(s)) w.r.t. the flattened
    /// actor parameters. This is the ascent direction; the update step
    /// negates it.
    pub fn actor_loss_grad(&self, states: &[Vec64]) -> Result<Vec64> {
        let action_dim = self.action_low.len();
        let critic = &self.critic;
        actor_gradient(
            &self.actor,
            &self.action_low,
            &self.action_high,
            states,
            |s, a| {
                let mut x = s.to_vec();
                x.extend_from_slice(a);
                let (_, input_grad) = critic.backward(&x, &[1.0]).expect("critic backward");
                input_grad[input_grad.len() - action_dim..].to_vec()
            },
        )
    }

    /// Gradient w.r.t. the flattened critic parameters of the mean squared
    /// Bellman error with targets R + gamma Q_phi'(S', pi_theta'(S')).
    /// Targets are constants: no gradient flows through the target nets.
    pub fn critic_loss_grad(&self, batch: &[&Transition], gamma: f64) -> Result<(f64, Vec64)> {
        let pairs: Vec<(Vec64, Vec64, f64)> = batch
            .iter()
            .map(|tr| {
                let a_next = self.target_policy(&tr.next_state);
                let y = tr.reward + gamma * self.target_q_value(&tr.next_state, &a_next);
                (tr.state.clone(), tr.action.clone(), y)
            })
            .collect();
        critic_regression_grad(&self.critic, &pairs)
    }

    /// One Adam ascent step on the actor over the given real states.
    pub fn actor_update(&mut self, states: &[Vec64]) -> Result<()> {
        let g = self.actor_loss_grad(states)?;
        let descent: Vec64 = g.iter().map(|x| -x).collect();
        let mut params = self.actor.flatten();
        self.actor_opt.step(&mut params, &descent)?;
        self.actor.set_from_flat(&params);
        Ok(())
    }

    /// One Adam step on the critic given a precomputed loss gradient.
    pub fn critic_apply_grad(&mut self, grad: &[f64]) -> Result<()> {
        let mut params = self.critic.flatten();
        self.critic_opt.step(&mut params, grad)?;
        self.critic.set_from_flat(&params);
        Ok(())
    }

    /// target <- (1 - decay) * target + decay * live, both networks.
    pub fn target_update(&mut self) {
        polyak(&mut self.target_actor, &self.actor, self.decay);
        polyak(&mut self.target_critic, &self.critic, self.decay);
    }

    /// Mean squared TD error on a batch, used as a training health metric.
    pub fn bellman_error(&self, batch: &[&Transition], gamma: f64) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for tr in batch {
            let a_next = self.target_policy(&tr.next_state);
            let y = tr.reward + gamma * self.target_q_value(&tr.next_state, &a_next);
            let e = self.q_value(&tr.state, &tr.action) - y;
            total += e * e;
        }
        total / batch.len() as f64
    }
}

fn polyak(target: &mut Mlp, live: &Mlp, decay: f64) {
    let mut t = target.flatten();
    let l = live.flatten();
    for (ti, li) in t.iter_mut().zip(l.iter()) {
        *ti = (1.0 - decay) * *ti + decay * li;
    }
    target.set_from_flat(&t);
}

/// Gradient of mean_s Q(s, a(s)) w.r.t. the actor parameters, where
/// a(s) = scale(actor(s)) and `dq_da` supplies the gradient of Q w.r.t.
/// the scaled action. Generic over the critic so analytic stubs can be
/// checked against hand calculus.
pub fn actor_gradient<F>(
    actor: &Mlp,
    action_low: &[f64],
    action_high: &[f64],
    states: &[Vec64],
    dq_da: F,
) -> Result<Vec64>
where
    F: Fn(&[f64], &[f64]) -> Vec64,
{
    if states.is_empty() {
        return Err(Error::Config("actor_gradient: empty batch".into()));
    }
    let n = states.len() as f64;
    let mut grad = vec![0.0; actor.param_count()];
    for s in states {
        let raw = actor.forward(s)?;
        let a = scale_action(&raw, action_low, action_high);
        let dq = dq_da(s, &a);
        // chain through the affine scaling: da_i/draw_i = (hi - lo)/2
        let raw_grad: Vec64 = dq
            .iter()
            .zip(action_low.iter().zip(action_high.iter()))
            .map(|(g, (lo, hi))| g * 0.5 * (hi - lo) / n)
            .collect();
        let (pg, _) = actor.backward(s, &raw_grad)?;
        for (g, p) in grad.iter_mut().zip(pg.iter()) {
            *g += p;
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("actor gradient".into()));
    }
    Ok(grad)
}

/// Loss and gradient of (1/n) sum (Q(s, a) - y)^2 over fixed labels y.
pub fn critic_regression_grad(
    critic: &Mlp,
    pairs: &[(Vec64, Vec64, f64)],
) -> Result<(f64, Vec64)> {
    if pairs.is_empty() {
        return Err(Error::Config("critic_regression_grad: empty batch".into()));
    }
    let n = pairs.len() as f64;
    let mut grad = vec![0.0; critic.param_count()];
    let mut loss = 0.0;
    for (s, a, y) in pairs {
        let mut x = s.clone();
        x.extend_from_slice(a);
        let q = critic.forward(&x)?[0];
        let e = q - y;
        loss += e * e / n;
        let (pg, _) = critic.backward(&x, &[2.0 * e / n])?;
        for (g, p) in grad.iter_mut().zip(pg.iter()) {
            *g += p;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("critic regression loss".into()));
    }
    Ok((loss, grad))
}

/// Bounded FIFO store of real transitions; sampling is uniform with
/// replacement over current contents.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    pub capacity: usize,
    transitions: std::collections::VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        ReplayBuffer {
            capacity,
            transitions: std::collections::VecDeque::with_capacity(capacity.min(1 << 20)),
        }
    }

    pub fn push(&mut self, tr: Transition) {
        if self.transitions.len() == self.capacity {
            self.transitions.pop_front();
        }
        self.transitions.push_back(tr);
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.transitions[i]
    }

    pub fn sample<'a>(&'a self, n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Transition> {
        (0..n)
            .map(|_| &self.transitions[rng.gen_range(0..self.transitions.len())])
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter()
    }

    pub fn to_vec(&self) -> Vec<Transition> {
        self.transitions.iter().cloned().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    /// Gaussian noise on the actor parameters, resampled per episode,
    /// with sigma adapted toward a target action-space distance.
    ParamSpace,
    /// clip(pi(s) + N(0, sigma^2)) per step.
    ActionGaussian,
}

#[derive(Clone, Debug)]
pub struct Explorer {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub target_distance: f64,
    noisy_actor: Option<Mlp>,
}

impl Explorer {
    pub fn new(kind: NoiseKind, sigma: f64, target_distance: f64) -> Explorer {
        Explorer {
            kind,
            sigma,
            target_distance,
            noisy_actor: None,
        }
    }

    /// Draw a fresh parameter perturbation (ParamSpace mode). Called once
    /// per collected episode.
    pub fn resample(&mut self, actor: &Mlp, rng: &mut ChaCha8Rng) {
        if self.kind != NoiseKind::ParamSpace {
            return;
        }
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut params = actor.flatten();
        for p in params.iter_mut() {
            *p += self.sigma * normal.sample(rng);
        }
        let mut noisy = actor.clone();
        noisy.set_from_flat(&params);
        self.noisy_actor = Some(noisy);
    }

    pub fn action(&self, agent: &Agent, state: &[f64], rng: &mut ChaCha8Rng) -> Vec64 {
        match self.kind {
            NoiseKind::ParamSpace => {
                let net = self.noisy_actor.as_ref().unwrap_or(&agent.actor);
                let raw = net.forward(state).expect("noisy actor forward");
                let a = scale_action(&raw, &agent.action_low, &agent.action_high);
                clip_box(&a, &agent.action_low, &agent.action_high)
            }
            NoiseKind::ActionGaussian => {
                let normal = Normal::new(0.0, self.sigma).unwrap();
                let a: Vec64 = agent
                    .policy(state)
                    .iter()
                    .map(|x| x + normal.sample(rng))
                    .collect();
                clip_box(&a, &agent.action_low, &agent.action_high)
            }
        }
    }

    /// Mean action-space distance between the noisy and clean policy on
    /// recent states; sigma moves multiplicatively toward the target.
    pub fn adapt(&mut self, agent: &Agent, recent_states: &[Vec64]) {
        if self.kind != NoiseKind::ParamSpace || recent_states.is_empty() {
            return;
        }
        let Some(noisy) = &self.noisy_actor else { return };
        let mut total = 0.0;
        for s in recent_states {
            let clean = agent.policy(s);
            let raw = noisy.forward(s).expect("noisy actor forward");
            let pert = scale_action(&raw, &agent.action_low, &agent.action_high);
            total += clean
                .iter()
                .zip(pert.iter())
                .map(|(c, p)| (c - p) * (c - p))
                .sum::<f64>()
                .sqrt();
        }
        let mean_distance = total / recent_states.len() as f64;
        if mean_distance > self.target_distance {
            self.sigma /= 1.01;
        } else {
            self.sigma *= 1.01;
        }
    }
}

fn clip_box(a: &[f64], low: &[f64], high: &[f64]) -> Vec64 {
    a.iter()
        .zip(low.iter().zip(high.iter()))
        .map(|(x, (lo, hi))| x.clamp(*lo, *hi))
        .collect()
}
