//! The end-to-end training loop: collect with the exploration policy,
//! fit the dynamics model, update actor and critic per the configured
//! value-expansion mode, evaluate greedily at fixed intervals, and write
//! reproducible per-seed run artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ddpg::{Agent, AgentConfig, Explorer, ReplayBuffer};
use crate::envs::Env;
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::{run_id, MetricsRow};
use crate::model::{Dynamics, LearnedModel};
use crate::mve::{build_tdk_targets, imagination_buffer_step, naive_targets, tdk_critic_grad, MveMode};
use crate::nn::Vec64;

pub struct Trainer {
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub env: Env,
    pub agent: Agent,
    pub model: Dynamics,
    pub buffer: ReplayBuffer,
    pub imag_buffer: Vec<crate::envs::Transition>,
    pub explorer: Explorer,
    pub env_step: usize,
    state: Vec64,
    episode_states: Vec<Vec64>,
    explore_rng: ChaCha8Rng,
    train_rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
    model_rng: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Trainer {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Trainer> {
        let env = Env::by_name(&cfg.env_name)?;
        let mut agent_cfg = AgentConfig::for_env(&env.spec);
        agent_cfg.hidden = cfg.hidden.clone();
        agent_cfg.actor_lr = cfg.actor_lr;
        agent_cfg.critic_lr = cfg.critic_lr;
        agent_cfg.decay = cfg.decay;
        let agent = Agent::new(&agent_cfg, seed);
        let model = if cfg.oracle_dynamics {
            Dynamics::Oracle(env.clone())
        } else {
            Dynamics::Learned(LearnedModel::new(
                env.spec.state_dim,
                env.spec.action_dim,
                &cfg.model_hidden,
                cfg.model_lr,
                seed.wrapping_add(0x51_7c_c1_b7),
            ))
        };
        let mut explore_rng = stream(seed, 1);
        let mut explorer = Explorer::new(cfg.noise_kind, cfg.noise_sigma, cfg.noise_target_distance);
        let state = env.reset(&mut explore_rng);
        explorer.resample(&agent.actor, &mut explore_rng);
        Ok(Trainer {
            cfg: cfg.clone(),
            seed,
            buffer: ReplayBuffer::new(cfg.replay_capacity),
            imag_buffer: Vec::new(),
            explorer,
            env_step: 0,
            state,
            episode_states: Vec::new(),
            explore_rng,
            train_rng: stream(seed, 2),
            eval_rng: stream(seed, 3),
            model_rng: stream(seed, 4),
            env,
            agent,
            model,
        })
    }

    /// One collected environment step plus the training work attached to it.
    pub fn step(&mut self) -> Result<()> {
        self.env_step += 1;
        let action = if self.env_step <= self.cfg.warmup_steps {
            self.env.random_action(&mut self.explore_rng)
        } else {
            self.explorer
                .action(&self.agent, &self.state, &mut self.explore_rng)
        };
        let tr = self.env.step(&self.state, &action)?;
        self.episode_states.push(self.state.clone());
        self.state = tr.next_state.clone();
        self.buffer.push(tr);

        if self.episode_states.len() >= self.env.spec.episode_length {
            // episode boundary: adapt and redraw the parameter noise,
            // refresh model normalization statistics
            self.explorer.adapt(&self.agent, &self.episode_states);
            self.explorer
                .resample(&self.agent.actor, &mut self.explore_rng);
            self.episode_states.clear();
            self.state = self.env.reset(&mut self.explore_rng);
            if let Dynamics::Learned(m) = &mut self.model {
                if self.buffer.len() >= self.cfg.model_warmup_steps {
                    m.refresh_normalization(&self.buffer.to_vec());
                }
            }
        }

        if self.env_step >= self.cfg.model_warmup_steps {
            if let Dynamics::Learned(m) = &mut self.model {
                if m.trained_on == 0 {
                    m.refresh_normalization(&self.buffer.to_vec());
                }
                let data = self.buffer.to_vec();
                m.fit_more(
                    &data,
                    self.cfg.gradient_steps,
                    self.cfg.model_batch_size,
                    &mut self.model_rng,
                )?;
            }
        }

        if self.env_step >= self.cfg.warmup_steps {
            for _ in 0..self.cfg.gradient_steps {
                self.gradient_step()?;
            }
        }
        Ok(())
    }

    fn gradient_step(&mut self) -> Result<()> {
        let gamma = self.env.spec.gamma;
        let env = self.env.clone();
        let reward_fn = |s: &[f64], a: &[f64]| env.reward(s, a);
        match self.cfg.mve.mode {
            MveMode::ImaginationBuffer => {
                imagination_buffer_step(
                    &mut self.agent,
                    &self.model,
                    &self.buffer,
                    &mut self.imag_buffer,
                    self.cfg.mve.h,
                    self.cfg.mve.ib_ratio,
                    self.cfg.batch_size,
                    gamma,
                    reward_fn,
                    &mut self.train_rng,
                )?;
            }
            mode => {
                let h = if mode == MveMode::Off { 0 } else { self.cfg.mve.h };
                let batch = self.buffer.sample(self.cfg.batch_size, &mut self.train_rng);
                let states: Vec<Vec64> = batch.iter().map(|t| t.state.clone()).collect();
                let mut targets = Vec::new();
                for tau0 in &batch {
                    let ts = if mode == MveMode::Naive {
                        naive_targets(&self.agent, &self.model, tau0, h, gamma, reward_fn)
                    } else {
                        build_tdk_targets(&self.agent, &self.model, tau0, h, gamma, reward_fn)
                    };
                    targets.extend(ts);
                }
                self.agent.actor_update(&states)?;
                let (_, grad) = tdk_critic_grad(&self.agent, &targets)?;
                self.agent.critic_apply_grad(&grad)?;
            }
        }
        self.agent.target_update();
        Ok(())
    }

    /// Greedy (noise-free) evaluation episodes; returns (mean, std) of the
    /// undiscounted episode return.
    pub fn evaluate(&mut self) -> (f64, f64) {
        let n = self.cfg.eval_episodes;
        let mut returns = Vec::with_capacity(n);
        for _ in 0..n {
            let mut s = self.env.reset(&mut self.eval_rng);
            let mut total = 0.0;
            for _ in 0..self.env.spec.episode_length {
                let a = self.agent.policy(&s);
                let tr = self.env.step(&s, &a).expect("eval step");
                total += tr.reward;
                s = tr.next_state;
            }
            returns.push(total);
        }
        let mean = returns.iter().sum::<f64>() / n as f64;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    }

    pub fn metrics_row(&mut self) -> MetricsRow {
        let (mean, std) = self.evaluate();
        let gamma = self.env.spec.gamma;
        let batch = if self.buffer.is_empty() {
            Vec::new()
        } else {
            self.buffer
                .sample(self.cfg.batch_size.min(self.buffer.len()), &mut self.eval_rng)
        };
        let bellman = self.agent.bellman_error(&batch, gamma);
        let model_mse = match &self.model {
            Dynamics::Oracle(_) => 0.0,
            Dynamics::Learned(m) => {
                if m.trained_on == 0 {
                    0.0
                } else {
                    let owned: Vec<crate::envs::Transition> =
                        batch.iter().map(|t| (*t).clone()).collect();
                    m.one_step_mse(&owned)
                }
            }
        };
        MetricsRow {
            env_step: self.env_step,
            eval_return_mean: mean,
            eval_return_std: std,
            critic_bellman_error: bellman,
            model_one_step_mse: model_mse,
        }
    }

    /// Run to total_steps, collecting one metrics row per eval interval.
    /// Wall-clock timestamps are returned separately so the metrics are a
    /// pure function of (config, seed).
    pub fn run(&mut self) -> Result<(Vec<MetricsRow>, Vec<(usize, f64)>)> {
        let start = Instant::now();
        let mut rows = Vec::new();
        let mut timing = Vec::new();
        while self.env_step < self.cfg.total_steps {
            self.step()?;
            if self.env_step.is_multiple_of(self.cfg.eval_interval) {
                rows.push(self.metrics_row());
                timing.push((self.env_step, start.elapsed().as_secs_f64()));
            }
        }
        Ok((rows, timing))
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(MetricsRow::CSV_HEADER);
    for r in rows {
        out.push_str(&r.csv_line());
    }
    out
}

/// Runs every seed of the config, writing one artifact directory per seed:
/// metrics.csv, timing.csv, meta.txt, config.cfg, agent.json and (for
/// learned dynamics) model.json. A diverged run is marked failed in
/// meta.txt and keeps its partial metrics.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let base = Path::new(&cfg.out_dir);
    fs::create_dir_all(base)?;
    let mut dirs = Vec::new();
    for &seed in &cfg.seeds {
        let dir = base.join(format!("seed_{seed}"));
        fs::create_dir_all(&dir)?;
        let mut trainer = Trainer::new(cfg, seed)?;
        let outcome = trainer.run();
        let (rows, timing, status) = match outcome {
            Ok((rows, timing)) => (rows, timing, "ok".to_string()),
            Err(e) => (Vec::new(), Vec::new(), format!("failed: {e}")),
        };
        fs::write(dir.join("metrics.csv"), metrics_csv(&rows))?;
        let mut tcsv = String::from("env_step,wall_time_s\n");
        for (s, t) in &timing {
            tcsv.push_str(&format!("{s},{t}\n"));
        }
        fs::write(dir.join("timing.csv"), tcsv)?;
        fs::write(dir.join("config.cfg"), cfg.canonical())?;
        fs::write(
            dir.join("meta.txt"),
            format!(
                "run_id = {}\nseed = {}\nstatus = {}\nfinal_step = {}\n\n# config\n{}",
                run_id(&cfg.canonical(), seed),
                seed,
                status,
                trainer.env_step,
                cfg.canonical()
            ),
        )?;
        fs::write(dir.join("agent.json"), serde_json::to_string(&trainer.agent)?)?;
        if let Dynamics::Learned(m) = &trainer.model {
            fs::write(dir.join("model.json"), serde_json::to_string(m)?)?;
        }
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Loads the agent and config back from a run directory.
pub fn load_run(dir: &Path) -> Result<(ExperimentConfig, Agent, Option<LearnedModel>)> {
    let cfg = ExperimentConfig::parse(&fs::read_to_string(dir.join("config.cfg"))?)?;
    let agent: Agent = serde_json::from_str(&fs::read_to_string(dir.join("agent.json"))?)?;
    let model_path = dir.join("model.json");
    let model = if model_path.exists() {
        Some(serde_json::from_str(&fs::read_to_string(model_path)?)?)
    } else {
        None
    };
    Ok((cfg, agent, model))
}
