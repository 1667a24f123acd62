//! TOML run configuration. Every key is optional; defaults give K=3, R=1,
//! S=3, proposer temperature 0.7, synthesis temperature 0 and seed 42.
//!
//! ```toml
//! seed = 42
//!
//! [pipeline]
//! k = 3
//! r = 1
//! s = 3
//! aggregator = "prism"        # prism | majority_vote | random_select | oracle_select
//! backend = "simulated"       # simulated | llm | mock
//! proposer_temperature = 0.7
//! synthesis_temperature = 0.0
//!
//! [[pipeline.roles]]
//! name = "Minimalist"
//! instruction = "Solve with fewest steps. Prioritize simplicity."
//!
//! [world]
//! p = 0.4
//! rho = 0.0
//! reviewer_error = 0.2
//! synth_success = 0.8         # defaults to 1 - reviewer_error
//! correct_variants = 1
//! incorrect_variants = 1
//!
//! [costs]
//! propose = 800
//! review = 400
//! synthesize = 1200
//!
//! [llm]
//! base_url = "https://api.openai.com/v1"   # PRISM_BASE_URL overrides
//! model = "gpt-4o-mini"
//! timeout_secs = 60
//! max_retries = 3
//! transcript = "mock.jsonl"   # used by the mock backend, relative to this file
//!
//! [exec]
//! workers = 4
//!
//! [simulate]
//! trials = 100000
//!
//! [sweep]
//! k = [1, 2, 3]
//! trials = 20000
//! ```
//!
//! The API key is read from `PRISM_API_KEY` only.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{default_roles, EndpointConfig, Role};
use crate::montecarlo::{SweepCell, SweepGrid};
use crate::pipeline::sim::CostModel;
use crate::pipeline::{Aggregator, Backend, RunConfig, SimulatedWorld};
use crate::simworld::{AgentPopulation, ReviewerModel, TaskModel, WorldSeed};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub k: u32,
    pub r: u32,
    pub s: u32,
    pub aggregator: Aggregator,
    pub backend: Backend,
    pub proposer_temperature: f64,
    pub synthesis_temperature: f64,
    pub roles: Vec<Role>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = RunConfig::default();
        Self {
            k: d.k_proposers,
            r: d.r_reviewers,
            s: d.s_synth_iters,
            aggregator: d.aggregator,
            backend: d.backend,
            proposer_temperature: d.proposer_temperature,
            synthesis_temperature: d.synthesis_temperature,
            roles: default_roles(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub p: f64,
    pub rho: f64,
    pub reviewer_error: f64,
    pub synth_success: Option<f64>,
    pub correct_variants: u32,
    pub incorrect_variants: u32,
}

impl Default for WorldSection {
    fn default() -> Self {
        Self {
            p: 0.4,
            rho: 0.0,
            reviewer_error: 0.2,
            synth_success: None,
            correct_variants: 1,
            incorrect_variants: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub base_url: String,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub transcript: Option<PathBuf>,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            timeout_secs: 60.0,
            max_retries: 3,
            transcript: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecSection {
    pub workers: usize,
}

impl Default for ExecSection {
    fn default() -> Self {
        Self { workers: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub trials: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { trials: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub pipeline: PipelineSection,
    pub world: WorldSection,
    pub costs: CostModel,
    pub llm: LlmSection,
    pub exec: ExecSection,
    pub simulate: SimulateSection,
    pub sweep: Option<SweepGrid>,
    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 42,
            pipeline: PipelineSection::default(),
            world: WorldSection::default(),
            costs: CostModel::default(),
            llm: LlmSection::default(),
            exec: ExecSection::default(),
            simulate: SimulateSection::default(),
            sweep: None,
            base_dir: PathBuf::from("."),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.run_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.pipeline.backend == Backend::Simulated {
            self.world().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.exec.workers == 0 {
            return Err(ConfigError::Invalid("exec.workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn run_config(&self) -> RunConfig {
        let p = &self.pipeline;
        RunConfig {
            k_proposers: p.k,
            r_reviewers: p.r,
            s_synth_iters: p.s,
            roles: p.roles.clone(),
            aggregator: p.aggregator,
            backend: p.backend,
            proposer_temperature: p.proposer_temperature,
            synthesis_temperature: p.synthesis_temperature,
            seed: WorldSeed::new(self.seed),
        }
    }

    pub fn world(&self) -> crate::pipeline::Result<SimulatedWorld> {
        let w = &self.world;
        let population = AgentPopulation::exchangeable(self.pipeline.k as usize, w.p, w.rho)?;
        let task = TaskModel::new(w.p, w.correct_variants, w.incorrect_variants)?;
        let reviewers = ReviewerModel::new(w.reviewer_error, self.pipeline.r)?;
        let q = w.synth_success.unwrap_or(1.0 - w.reviewer_error);
        Ok(SimulatedWorld {
            population,
            task,
            reviewers,
            synthesis: crate::pipeline::SynthesisModel {
                per_iteration_success: q,
            },
            costs: self.costs,
        })
    }

    pub fn base_cell(&self) -> SweepCell {
        SweepCell {
            k: self.pipeline.k,
            r: self.pipeline.r,
            s: self.pipeline.s,
            p: self.world.p,
            eps0: self.world.reviewer_error,
            rho: self.world.rho,
            m: self.world.correct_variants,
            aggregator: self.pipeline.aggregator,
        }
    }

    pub fn endpoint(&self) -> crate::llm::Result<EndpointConfig> {
        let mut e = EndpointConfig::new(&self.llm.base_url, &self.llm.model)?;
        e.timeout = Duration::from_secs_f64(self.llm.timeout_secs.max(0.001));
        e.max_retries = self.llm.max_retries;
        Ok(e)
    }

    pub fn transcript_path(&self) -> Option<PathBuf> {
        self.llm.transcript.as_ref().map(|t| {
            if t.is_absolute() {
                t.clone()
            } else {
                self.base_dir.join(t)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_standard_configuration() {
        let cfg = Config::parse("").unwrap();
        let run = cfg.run_config();
        assert_eq!((run.k_proposers, run.r_reviewers, run.s_synth_iters), (3, 1, 3));
        assert_eq!((run.proposer_temperature, run.synthesis_temperature), (0.7, 0.0));
        assert_eq!(run.seed.root_seed, 42);
        assert_eq!(run.roles.len(), 3);
    }

    #[test]
    fn nested_keys_parse() {
        let cfg = Config::parse("seed = 7\n[pipeline]\nk = 1\naggregator = \"majority_vote\"\n[world]\np = 0.3\n[sweep]\nk = [1, 2]\ntrials = 10\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.pipeline.aggregator, Aggregator::MajorityVote);
        assert_eq!(cfg.sweep.unwrap().k, vec![1, 2]);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(Config::parse("[pipeline]\nkk = 3\n").is_err());
        assert!(Config::parse("[pipeline]\nk = 0\n").is_err());
        assert!(Config::parse("[world]\nreviewer_error = 0.6\n").is_err());
        assert!(Config::parse("[llm]\napi_key = \"x\"\n").is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = Config::load(Path::new("/no/such/prism.toml")).unwrap_err();
        assert!(err.to_string().contains("/no/such/prism.toml"));
    }
}
