//! Experiment configuration: a sectioned key-value file (TOML) mirroring the
//! module layout, with `desk`/`full` budget presets and environment-variable
//! overrides of any key via the `TICKETLAB_<SECTION>_<KEY>` prefix.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agents::{
    BcHp, BcTrainer, DqnHp, DqnTrainer, EnvSpec, ExpertCheckpoint, PpoHp, PpoTrainer, Trainer,
};
use crate::env::maze::{CELLS, CHANNELS};
use crate::env::{Encoding, EnvId, Layout};
use crate::error::{Error, Result};
use crate::imp::ImpConfig;
use crate::net::init::InitScheme;
use crate::net::{Activation, NetworkSpec, OutputHead};
use crate::prune::Condition;

pub const ENV_PREFIX: &str = "TICKETLAB_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dqn,
    Ppo,
    Bc,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ppo => "ppo",
            Algorithm::Bc => "bc",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqn" => Ok(Algorithm::Dqn),
            "ppo" => Ok(Algorithm::Ppo),
            "bc" => Ok(Algorithm::Bc),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// SI-table budgets.
    Full,
    /// Reduced budgets for laptop-scale runs.
    Desk,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub env: String,
    pub algorithm: String,
    #[serde(default = "default_encoding")]
    pub encoding: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<String>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_prune_fraction")]
    pub prune_fraction: f64,
    #[serde(default)]
    pub rewind_step: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Optional custom maze layout file; the bundled layout otherwise.
    #[serde(default)]
    pub layout_path: Option<String>,
}

fn default_encoding() -> String {
    "object_map".into()
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_conditions() -> Vec<String> {
    Condition::ALL.iter().map(|c| c.name().to_string()).collect()
}
fn default_iterations() -> usize {
    20
}
fn default_prune_fraction() -> f64 {
    0.2
}
fn default_out_dir() -> String {
    "runs".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: String,
    #[serde(default = "default_init")]
    pub init: String,
    #[serde(default = "default_rescale")]
    pub input_rescale: f64,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_activation() -> String {
    "tanh".into()
}
fn default_init() -> String {
    "kaiming".into()
}
fn default_rescale() -> f64 {
    1.0
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            hidden: default_hidden(),
            activation: default_activation(),
            init: default_init(),
            input_rescale: default_rescale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub budget: usize,
    pub eval_every: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_random_policy_episodes")]
    pub random_policy_episodes: usize,
}

fn default_eval_episodes() -> usize {
    20
}
fn default_random_policy_episodes() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DqnSection {
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub batch_size: Option<usize>,
    pub buffer_capacity: Option<usize>,
    pub alpha: Option<f64>,
    pub beta_init: Option<f64>,
    pub beta_final: Option<f64>,
    pub huber_delta: Option<f64>,
    pub grad_clip: Option<f64>,
    pub replay_ratio: Option<f64>,
    pub target_sync: Option<usize>,
    pub eps_start: Option<f64>,
    pub eps_final: Option<f64>,
    pub eps_anneal_frac: Option<f64>,
    pub learning_starts: Option<usize>,
}

impl DqnSection {
    pub fn hp(&self) -> DqnHp {
        let d = DqnHp::default();
        DqnHp {
            lr: self.lr.unwrap_or(d.lr),
            gamma: self.gamma.unwrap_or(d.gamma),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            buffer_capacity: self.buffer_capacity.unwrap_or(d.buffer_capacity),
            alpha: self.alpha.unwrap_or(d.alpha),
            beta_init: self.beta_init.unwrap_or(d.beta_init),
            beta_final: self.beta_final.unwrap_or(d.beta_final),
            huber_delta: self.huber_delta.unwrap_or(d.huber_delta),
            grad_clip: self.grad_clip.unwrap_or(d.grad_clip),
            replay_ratio: self.replay_ratio.unwrap_or(d.replay_ratio),
            target_sync: self.target_sync.unwrap_or(d.target_sync),
            eps_start: self.eps_start.unwrap_or(d.eps_start),
            eps_final: self.eps_final.unwrap_or(d.eps_final),
            eps_anneal_frac: self.eps_anneal_frac.unwrap_or(d.eps_anneal_frac),
            learning_starts: self.learning_starts.unwrap_or(d.learning_starts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PpoSection {
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub clip: Option<f64>,
    pub value_coeff: Option<f64>,
    pub entropy_coeff: Option<f64>,
    pub epochs: Option<usize>,
    pub n_workers: Option<usize>,
    pub horizon: Option<usize>,
    pub prune_critic: Option<bool>,
}

impl PpoSection {
    pub fn hp(&self) -> PpoHp {
        let d = PpoHp::default();
        PpoHp {
            lr: self.lr.unwrap_or(d.lr),
            gamma: self.gamma.unwrap_or(d.gamma),
            lambda: self.lambda.unwrap_or(d.lambda),
            clip: self.clip.unwrap_or(d.clip),
            value_coeff: self.value_coeff.unwrap_or(d.value_coeff),
            entropy_coeff: self.entropy_coeff.unwrap_or(d.entropy_coeff),
            epochs: self.epochs.unwrap_or(d.epochs),
            n_workers: self.n_workers.unwrap_or(d.n_workers),
            horizon: self.horizon.unwrap_or(d.horizon),
            prune_critic: self.prune_critic.unwrap_or(d.prune_critic),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct BcSection {
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    /// Path of the frozen expert checkpoint (required when algorithm = bc).
    pub expert_path: Option<String>,
}

impl BcSection {
    pub fn hp(&self) -> BcHp {
        let d = BcHp::default();
        BcHp {
            lr: self.lr.unwrap_or(d.lr),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    #[serde(default)]
    pub network: NetworkSection,
    pub training: TrainingSection,
    #[serde(default)]
    pub dqn: DqnSection,
    #[serde(default)]
    pub ppo: PpoSection,
    #[serde(default)]
    pub bc: BcSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validated()
    }

    /// Loads a file and applies `TICKETLAB_<SECTION>_<KEY>` environment
    /// overrides, e.g. `TICKETLAB_TRAINING_BUDGET=1000`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_with_overrides(&text, std::env::vars())
    }

    pub fn parse_with_overrides(
        text: &str,
        vars: impl Iterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
            let Some((section, key)) = rest.split_once('_') else { continue };
            let (section, key) = (section.to_lowercase(), key.to_lowercase());
            if !["run", "network", "training", "dqn", "ppo", "bc"].contains(&section.as_str()) {
                return Err(Error::Config(format!("override {name}: unknown section")));
            }
            // A bare scalar is not a TOML document; wrap it in a key to parse
            // numbers, booleans and arrays, falling back to a plain string.
            let parsed: toml::Value = format!("v = {value}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.clone()));
            doc.entry(section)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override {name}: section is not a table")))?
                .insert(key, parsed);
        }
        let cfg: ExperimentConfig = doc
            .try_into()
            .map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validated()
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialize: {e}")))
    }

    fn validated(self) -> Result<Self> {
        self.env_id()?;
        self.algorithm()?;
        self.encoding()?;
        self.conditions()?;
        self.init_scheme()?;
        self.activation()?;
        if self.run.iterations < 1 {
            return Err(Error::Config("run.iterations must be >= 1".into()));
        }
        if self.training.budget == 0 || self.training.eval_every == 0 {
            return Err(Error::Config("training budgets must be positive".into()));
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(Error::Config("network.hidden must be nonempty positive sizes".into()));
        }
        if self.network.input_rescale <= 0.0 {
            return Err(Error::Config("network.input_rescale must be positive".into()));
        }
        Ok(self)
    }

    pub fn env_id(&self) -> Result<EnvId> {
        self.run.env.parse()
    }

    pub fn algorithm(&self) -> Result<Algorithm> {
        self.run.algorithm.parse()
    }

    pub fn encoding(&self) -> Result<Encoding> {
        self.run.encoding.parse()
    }

    pub fn conditions(&self) -> Result<Vec<Condition>> {
        self.run.conditions.iter().map(|c| c.parse()).collect()
    }

    pub fn init_scheme(&self) -> Result<InitScheme> {
        match self.network.init.as_str() {
            "kaiming" | "kaiming_uniform" => Ok(InitScheme::KaimingUniform),
            "xavier" | "xavier_uniform" => Ok(InitScheme::XavierUniform),
            other => Err(Error::Config(format!("unknown init scheme '{other}'"))),
        }
    }

    pub fn activation(&self) -> Result<Activation> {
        match self.network.activation.as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }

    /// Rescales budgets for the desk preset; `full` keeps the file as-is.
    pub fn apply_preset(&mut self, preset: Preset) {
        if preset == Preset::Full {
            return;
        }
        self.training.budget = (self.training.budget / 10).max(1000);
        self.training.eval_every = (self.training.eval_every / 10).max(250);
        if matches!(self.env_id(), Ok(EnvId::MazeGrid)) {
            let cap = self.dqn.buffer_capacity.unwrap_or(DqnHp::default().buffer_capacity);
            self.dqn.buffer_capacity = Some(cap.min(20_000));
        }
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        let layout = match &self.run.layout_path {
            Some(p) => Layout::parse(&std::fs::read_to_string(p)?)?,
            None => Layout::default_layout(),
        };
        let entangle_seed = layout.entangle_seed;
        Ok(EnvSpec { id: self.env_id()?, encoding: self.encoding()?, layout, entangle_seed })
    }

    /// Sizes of the network under pruning: observation in, actions out.
    pub fn network_spec(&self, env_spec: &EnvSpec) -> Result<NetworkSpec> {
        let env = env_spec.make();
        let mut sizes = vec![env.obs_dim()];
        sizes.extend(&self.network.hidden);
        sizes.push(env.n_actions());
        let head = match self.algorithm()? {
            Algorithm::Dqn => OutputHead::Linear,
            Algorithm::Ppo | Algorithm::Bc => OutputHead::SoftmaxLogits,
        };
        NetworkSpec::new(sizes, self.activation()?, head)
    }

    fn critic_spec(&self, env_spec: &EnvSpec) -> Result<NetworkSpec> {
        let env = env_spec.make();
        let mut sizes = vec![env.obs_dim()];
        sizes.extend(&self.network.hidden);
        sizes.push(1);
        NetworkSpec::new(sizes, self.activation()?, OutputHead::Linear)
    }

    pub fn build_trainer(&self, env_spec: &EnvSpec) -> Result<Box<dyn Trainer>> {
        let scheme = self.init_scheme()?;
        let rescale = self.network.input_rescale;
        let net_spec = self.network_spec(env_spec)?;
        match self.algorithm()? {
            Algorithm::Dqn => Ok(Box::new(DqnTrainer {
                env_spec: env_spec.clone(),
                net_spec,
                scheme,
                input_rescale: rescale,
                hp: self.dqn.hp(),
            })),
            Algorithm::Ppo => Ok(Box::new(PpoTrainer {
                env_spec: env_spec.clone(),
                actor_spec: net_spec,
                critic_spec: self.critic_spec(env_spec)?,
                scheme,
                input_rescale: rescale,
                hp: self.ppo.hp(),
            })),
            Algorithm::Bc => {
                let path = self.bc.expert_path.as_ref().ok_or_else(|| {
                    Error::Precondition("behavioral cloning needs bc.expert_path".into())
                })?;
                if !Path::new(path).exists() {
                    return Err(Error::Precondition(format!(
                        "expert checkpoint '{path}' not found"
                    )));
                }
                let expert = ExpertCheckpoint::load(Path::new(path))?;
                Ok(Box::new(BcTrainer {
                    env_spec: env_spec.clone(),
                    net_spec,
                    scheme,
                    input_rescale: rescale,
                    expert: expert.policy,
                    hp: self.bc.hp(),
                }))
            }
        }
    }

    /// Everything hyperparameter-shaped that the harness itself does not
    /// hash, folded into the cache key.
    pub fn trainer_fingerprint(&self) -> Result<String> {
        let relevant = (
            &self.run.env,
            &self.run.encoding,
            &self.run.algorithm,
            &self.run.layout_path,
            &self.network,
            &self.training,
            &self.dqn,
            &self.ppo,
            &self.bc,
        );
        serde_json::to_string(&relevant)
            .map_err(|e| Error::Config(format!("fingerprint serialize: {e}")))
    }

    pub fn run_id(&self, condition: Condition, seed: u64) -> String {
        format!(
            "{}_{}_{}_s{}",
            self.run.env,
            self.run.algorithm,
            condition.name(),
            seed
        )
    }

    pub fn imp_config(&self, condition: Condition, seed: u64) -> Result<ImpConfig> {
        Ok(ImpConfig {
            run_id: self.run_id(condition, seed),
            condition,
            seed,
            iterations: self.run.iterations,
            prune_fraction: self.run.prune_fraction,
            budget: self.training.budget,
            eval_every: self.training.eval_every,
            eval_episodes: self.training.eval_episodes,
            random_policy_episodes: self.training.random_policy_episodes,
            rewind_step: self.run.rewind_step,
            trainer_fingerprint: self.trainer_fingerprint()?,
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.run.out_dir)
    }

    /// Channel grouping of the first layer for MazeGrid object encodings.
    pub fn channel_shape(&self) -> Result<Option<(usize, usize)>> {
        if self.env_id()? != EnvId::MazeGrid {
            return Ok(None);
        }
        Ok(match self.encoding()? {
            Encoding::ObjectMap | Encoding::Entangled => Some((CHANNELS, CELLS)),
            Encoding::Rgb => Some((3, CELLS)),
        })
    }
}
