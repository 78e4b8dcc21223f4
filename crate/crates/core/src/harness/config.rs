//! Line-oriented experiment configuration: `section.key = value` pairs,
//! `#` comments, unknown keys rejected. A parsed config round-trips to an
//! identical canonical text form.

use crate::ddpg::NoiseKind;
use crate::error::{Error, Result};
use crate::mve::{MveConfig, MveMode};

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env_name: String,
    pub mve: MveConfig,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub model_hidden: Vec<usize>,
    pub model_lr: f64,
    pub model_batch_size: usize,
    pub oracle_dynamics: bool,
    pub total_steps: usize,
    pub gradient_steps: usize,
    pub warmup_steps: usize,
    pub model_warmup_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub noise_kind: NoiseKind,
    pub noise_sigma: f64,
    pub noise_target_distance: f64,
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults; the paper-scale settings (warmup 10k, batch
    /// 512, 8x128 dynamics net) remain reachable through the same keys.
    fn default() -> Self {
        ExperimentConfig {
            env_name: "point_mass".into(),
            mve: MveConfig {
                mode: MveMode::Off,
                h: 0,
                ib_ratio: 4,
            },
            hidden: vec![64, 64],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            decay: 1e-2,
            batch_size: 128,
            replay_capacity: 1_000_000,
            model_hidden: vec![64, 64, 64, 64],
            model_lr: 1e-3,
            model_batch_size: 128,
            oracle_dynamics: false,
            total_steps: 30_000,
            gradient_steps: 4,
            warmup_steps: 1000,
            model_warmup_steps: 500,
            eval_interval: 500,
            eval_episodes: 5,
            seeds: vec![0, 1, 2, 3],
            noise_kind: NoiseKind::ParamSpace,
            noise_sigma: 0.1,
            noise_target_distance: 0.2,
            out_dir: "out".into(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(v: &str, key: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|x| {
            x.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("bad list element `{x}` for {key}")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Config(format!("bad value `{v}` for {key}")))
}

fn fmt_list<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let v = value.trim();
            match key {
                "env.name" => cfg.env_name = v.to_string(),
                "mve.mode" => {
                    cfg.mve.mode = MveMode::parse(v)
                        .ok_or_else(|| Error::Config(format!("unknown mve.mode `{v}`")))?
                }
                "mve.h" => cfg.mve.h = parse_one(v, key)?,
                "mve.ib_ratio" => cfg.mve.ib_ratio = parse_one(v, key)?,
                "agent.hidden" => cfg.hidden = parse_list(v, key)?,
                "agent.actor_lr" => cfg.actor_lr = parse_one(v, key)?,
                "agent.critic_lr" => cfg.critic_lr = parse_one(v, key)?,
                "agent.decay" => cfg.decay = parse_one(v, key)?,
                "agent.batch_size" => cfg.batch_size = parse_one(v, key)?,
                "agent.replay_capacity" => cfg.replay_capacity = parse_one(v, key)?,
                "model.hidden" => cfg.model_hidden = parse_list(v, key)?,
                "model.lr" => cfg.model_lr = parse_one(v, key)?,
                "model.batch_size" => cfg.model_batch_size = parse_one(v, key)?,
                "model.oracle" => cfg.oracle_dynamics = parse_one(v, key)?,
                "run.total_steps" => cfg.total_steps = parse_one(v, key)?,
                "run.gradient_steps" => cfg.gradient_steps = parse_one(v, key)?,
                "run.warmup_steps" => cfg.warmup_steps = parse_one(v, key)?,
                "run.model_warmup_steps" => cfg.model_warmup_steps = parse_one(v, key)?,
                "run.eval_interval" => cfg.eval_interval = parse_one(v, key)?,
                "run.eval_episodes" => cfg.eval_episodes = parse_one(v, key)?,
                "run.seeds" => cfg.seeds = parse_list(v, key)?,
                "run.out_dir" => cfg.out_dir = v.to_string(),
                "noise.kind" => {
                    cfg.noise_kind = match v {
                        "param_space" => NoiseKind::ParamSpace,
                        "action_gaussian" => NoiseKind::ActionGaussian,
                        other => {
                            return Err(Error::Config(format!("unknown noise.kind `{other}`")))
                        }
                    }
                }
                "noise.sigma" => cfg.noise_sigma = parse_one(v, key)?,
                "noise.target_distance" => cfg.noise_target_distance = parse_one(v, key)?,
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        crate::envs::Env::by_name(&self.env_name)?;
        let positive = [
            ("agent.batch_size", self.batch_size),
            ("agent.replay_capacity", self.replay_capacity),
            ("model.batch_size", self.model_batch_size),
            ("run.total_steps", self.total_steps),
            ("run.eval_interval", self.eval_interval),
            ("run.eval_episodes", self.eval_episodes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("run.seeds must be non-empty".into()));
        }
        if self.hidden.is_empty() || self.model_hidden.is_empty() {
            return Err(Error::Config("hidden layer lists must be non-empty".into()));
        }
        Ok(())
    }

    /// The unique canonical text form: every key, fixed order.
    pub fn canonical(&self) -> String {
        let noise = match self.noise_kind {
            NoiseKind::ParamSpace => "param_space",
            NoiseKind::ActionGaussian => "action_gaussian",
        };
        format!(
            "env.name = {}\n\
             mve.mode = {}\n\
             mve.h = {}\n\
             mve.ib_ratio = {}\n\
             agent.hidden = {}\n\
             agent.actor_lr = {}\n\
             agent.critic_lr = {}\n\
             agent.decay = {}\n\
             agent.batch_size = {}\n\
             agent.replay_capacity = {}\n\
             model.hidden = {}\n\
             model.lr = {}\n\
             model.batch_size = {}\n\
             model.oracle = {}\n\
             run.total_steps = {}\n\
             run.gradient_steps = {}\n\
             run.warmup_steps = {}\n\
             run.model_warmup_steps = {}\n\
             run.eval_interval = {}\n\
             run.eval_episodes = {}\n\
             run.seeds = {}\n\
             run.out_dir = {}\n\
             noise.kind = {}\n\
             noise.sigma = {}\n\
             noise.target_distance = {}\n",
            self.env_name,
            self.mve.mode.name(),
            self.mve.h,
            self.mve.ib_ratio,
            fmt_list(&self.hidden),
            self.actor_lr,
            self.critic_lr,
            self.decay,
            self.batch_size,
            self.replay_capacity,
            fmt_list(&self.model_hidden),
            self.model_lr,
            self.model_batch_size,
            self.oracle_dynamics,
            self.total_steps,
            self.gradient_steps,
            self.warmup_steps,
            self.model_warmup_steps,
            self.eval_interval,
            self.eval_episodes,
            fmt_list(&self.seeds),
            self.out_dir,
            noise,
            self.noise_sigma,
            self.noise_target_distance,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_canonically() {
        let cfg = ExperimentConfig::default();
        let text = cfg.canonical();
        let reparsed = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(reparsed, cfg);
        assert_eq!(reparsed.canonical(), text);
    }

    #[test]
    fn partial_config_fills_defaults_and_round_trips() {
        let text = "# comment\nenv.name = pendulum\nmve.mode = tdk\nmve.h = 5\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.env_name, "pendulum");
        assert_eq!(cfg.mve.mode, MveMode::Tdk);
        assert_eq!(cfg.mve.h, 5);
        assert_eq!(cfg.batch_size, ExperimentConfig::default().batch_size);
        let canon = cfg.canonical();
        assert_eq!(ExperimentConfig::parse(&canon).unwrap().canonical(), canon);
    }

    #[test]
    fn unknown_key_is_an_error() {
        assert!(ExperimentConfig::parse("run.banana = 3\n").is_err());
    }

    #[test]
    fn bad_values_are_errors() {
        assert!(ExperimentConfig::parse("mve.h = many\n").is_err());
        assert!(ExperimentConfig::parse("env.name = mujoco\n").is_err());
        assert!(ExperimentConfig::parse("mve.mode = fancy\n").is_err());
        assert!(ExperimentConfig::parse("run.seeds =\n").is_err());
        assert!(ExperimentConfig::parse("agent.batch_size = 0\n").is_err());
        assert!(ExperimentConfig::parse("just some words\n").is_err());
    }
}
