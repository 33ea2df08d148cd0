//! Stage orchestration: configuration, resumable manifests and the stage
//! runners that connect anchors, synthesis, QC, sampling, export and eval.

mod analyze;
mod config;
mod manifest;
mod stages;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use analyze::{analyze_dataset, Analysis};
pub use config::{
    AnchorsSection, BackendChoice, EvalSection, ExportSection, PipelineConfig, SampleSection,
    SynthesizeSection, WebSection,
};
pub use manifest::{
    config_hash, digest_path, part_file_name, sha256_file, InputDigest, ItemRecord, ItemRun, ItemRunner,
    ItemStatus, RunManifest, Stage,
};
pub use stages::{CheckPart, JudgedAttempt, SynthFailure, SynthPart};

/// Output file paths, relative to the run directory.
pub mod outputs {
    pub use super::stages::{
        ANALYSIS, ANCHORS, ANCHORS_SKIPPED, ATTEMPTS, CANDIDATES, CHECKS, CONSTRUCTION, DATASET, EVAL_OUTCOMES,
        EVAL_REPORT, EVAL_TABLE, EVAL_TRAJECTORIES, QUARANTINE, SFT, SYNTH_FAILURES,
    };
}

use crate::gateway::{ChatBackend, Gateway, HttpChatBackend, ScriptedBackend, TokenBucket};
use crate::web::{load_fixture, Blacklist, EnvFactory, LiveWeb, WebBackend};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("stage {stage} needs {missing}, which does not exist; run the earlier stage first")]
    StageDependencyMissing { stage: Stage, missing: String },
    #[error("manifest for stage {stage} was written under a different configuration")]
    ManifestConfigMismatch { stage: Stage },
    #[error("stage {stage} failed: {reason}")]
    StageFailed { stage: Stage, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl PipelineError {
    /// 1 for configuration problems, 2 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::ConfigInvalid(_) | PipelineError::ManifestConfigMismatch { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Require an existing manifest whose configuration hash matches.
    pub resume: bool,
    /// Process at most this many pending items, leaving the rest for later.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub manifest: RunManifest,
    pub processed: usize,
}

/// Everything a stage needs: configuration, model gateway, page source and
/// a worker pool.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub gateway: Gateway,
    pub env: EnvFactory,
    base_inputs: Vec<InputDigest>,
    scripted: Option<Arc<ScriptedBackend>>,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let mut base_inputs = Vec::new();
        let mut scripted = None;
        let backend: Arc<dyn ChatBackend> = match &config.backend {
            BackendChoice::Scripted { script } => {
                base_inputs.push(digest_path(script).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?);
                let b = Arc::new(ScriptedBackend::from_file(script).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?);
                scripted = Some(b.clone());
                b
            }
            BackendChoice::Live { http, .. } => {
                Arc::new(HttpChatBackend::new(http.clone()).map_err(PipelineError::ConfigInvalid)?)
            }
        };
        let mut gateway = Gateway::new(backend, config.retry.clone());
        if let BackendChoice::Live {
            rate_limit: Some(limit), ..
        } = &config.backend
        {
            gateway = gateway.with_rate_limit(TokenBucket::from_limit(*limit));
        }
        let web: Arc<dyn WebBackend> = match &config.web.fixture {
            Some(dir) => {
                base_inputs.push(digest_path(dir).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?);
                Arc::new(load_fixture(dir).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?)
            }
            None => Arc::new(LiveWeb::new(config.web.live.clone()).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?),
        };
        let blacklist = match &config.web.blacklist {
            Some(p) => {
                base_inputs.push(digest_path(p).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?);
                Blacklist::load(p).map_err(|e| PipelineError::ConfigInvalid(format!("{}: {e}", p.display())))?
            }
            None => Blacklist::default(),
        };
        let env = EnvFactory::new(web, Arc::new(blacklist), config.web.env.clone()).with_vision(gateway.clone());
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        Ok(Self {
            config,
            gateway,
            env,
            base_inputs,
            scripted,
            pool,
        })
    }

    pub fn scripted_backend(&self) -> Option<&ScriptedBackend> {
        self.scripted.as_deref()
    }

    pub fn run_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.config.out_dir.join(rel)
    }

    /// Scripted backends restart from the top of the script for every stage,
    /// so in-process runs see the same replies as one process per stage.
    pub fn run_stage(&self, stage: Stage, options: RunOptions) -> Result<StageOutcome, PipelineError> {
        if let Some(s) = &self.scripted {
            s.reset();
        }
        self.pool.install(|| match stage {
            Stage::Anchors => self.stage_anchors(options),
            Stage::Synthesize => self.stage_synthesize(options),
            Stage::Qc => self.stage_qc(options),
            Stage::Sample => self.stage_sample(options),
            Stage::ExportSft => self.stage_export(options),
            Stage::Eval => self.stage_eval(options),
            Stage::Analyze => self.stage_analyze(options),
        })
    }

    fn require(&self, stage: Stage, path: &Path) -> Result<(), PipelineError> {
        if path.exists() {
            Ok(())
        } else {
            Err(PipelineError::StageDependencyMissing {
                stage,
                missing: path.display().to_string(),
            })
        }
    }

    /// Loads or starts the stage manifest. A manifest written under other
    /// settings is an error when resuming and is discarded otherwise.
    fn begin(
        &self,
        stage: Stage,
        settings: serde_json::Value,
        inputs: &[&Path],
        options: RunOptions,
    ) -> Result<RunManifest, PipelineError> {
        let mut digests = self.base_inputs.clone();
        for p in inputs {
            self.require(stage, p)?;
            digests.push(digest_path(p)?);
        }
        let common = serde_json::json!({
            "seed": self.config.seed,
            "env": self.config.web.env,
            "live_web": if self.config.web.fixture.is_none() { Some(&self.config.web.live) } else { None },
            "backend": match &self.config.backend {
                BackendChoice::Scripted { .. } => serde_json::json!("scripted"),
                BackendChoice::Live { http, .. } => serde_json::json!(http),
            },
            "stage": settings,
        });
        let hash = config_hash(stage, &common, &digests);
        let path = RunManifest::path(self.run_dir(), stage);
        match RunManifest::load(&path)? {
            Some(m) if m.config_hash == hash => Ok(m),
            Some(_) if options.resume => Err(PipelineError::ManifestConfigMismatch { stage }),
            None if options.resume => Err(PipelineError::StageDependencyMissing {
                stage,
                missing: path.display().to_string(),
            }),
            existing => {
                if existing.is_some() {
                    let parts = self.run_dir().join("parts").join(stage.name());
                    if parts.exists() {
                        std::fs::remove_dir_all(&parts).map_err(|e| PipelineError::Io(e.to_string()))?;
                    }
                }
                let m = RunManifest::new(stage, hash, self.config.seed, digests);
                m.save(self.run_dir())?;
                Ok(m)
            }
        }
    }
}
