use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::eval::EvalConfig;
use crate::gateway::{HttpBackendConfig, RateLimit, RetryPolicy};
use crate::qc::QcConfig;
use crate::sampler::SolveConfig;
use crate::synth::SynthesisConfig;
use crate::web::{EnvConfig, LiveWebConfig};

/// Which chat backend serves model calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendChoice {
    Scripted {
        script: PathBuf,
    },
    Live {
        #[serde(flatten)]
        http: HttpBackendConfig,
        #[serde(default)]
        rate_limit: Option<RateLimit>,
    },
}

impl Default for BackendChoice {
    fn default() -> Self {
        BackendChoice::Live {
            http: HttpBackendConfig::default(),
            rate_limit: None,
        }
    }
}

impl BackendChoice {
    /// Parses the `--backend` flag: `live` or `scripted:<path>`.
    pub fn from_flag(s: &str) -> Result<Self, PipelineError> {
        match s.split_once(':') {
            Some(("scripted", p)) if !p.is_empty() => Ok(BackendChoice::Scripted { script: p.into() }),
            None if s == "live" => Ok(BackendChoice::default()),
            _ => Err(PipelineError::ConfigInvalid(format!(
                "--backend expects `live` or `scripted:<path>`, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct WebSection {
    /// Fixture directory; when unset the live web is used.
    pub fixture: Option<PathBuf>,
    pub blacklist: Option<PathBuf>,
    #[serde(flatten)]
    pub env: EnvConfig,
    pub live: LiveWebConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorsSection {
    pub queries: Vec<String>,
    pub per_query: usize,
}

impl Default for AnchorsSection {
    fn default() -> Self {
        Self {
            queries: Vec::new(),
            per_query: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct SynthesizeSection {
    #[serde(flatten)]
    pub synthesis: SynthesisConfig,
    /// Existing dataset whose label counts drive rarity weighting.
    pub prior_corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSection {
    #[serde(flatten)]
    pub solve: SolveConfig,
    /// Dataset to solve; defaults to the QC output.
    pub dataset: Option<PathBuf>,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            solve: SolveConfig {
                attempts: 3,
                ..SolveConfig::default()
            },
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportSection {
    pub include_system: bool,
}

impl Default for ExportSection {
    fn default() -> Self {
        Self { include_system: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct EvalSection {
    #[serde(flatten)]
    pub eval: EvalConfig,
    pub dataset: Option<PathBuf>,
}

/// One run's configuration, read from a TOML file. Relative paths resolve
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub backend: BackendChoice,
    pub retry: RetryPolicy,
    pub web: WebSection,
    pub anchors: AnchorsSection,
    pub synthesize: SynthesizeSection,
    pub qc: QcConfig,
    pub sample: SampleSection,
    pub export: ExportSection,
    pub eval: EvalSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            out_dir: "run".into(),
            backend: BackendChoice::default(),
            retry: RetryPolicy::default(),
            web: WebSection::default(),
            anchors: AnchorsSection::default(),
            synthesize: SynthesizeSection::default(),
            qc: QcConfig::default(),
            sample: SampleSection::default(),
            export: ExportSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out_dir);
        if let BackendChoice::Scripted { script } = &mut self.backend {
            resolve(base, script);
        }
        for p in [
            &mut self.web.fixture,
            &mut self.web.blacklist,
            &mut self.synthesize.prior_corpus,
            &mut self.sample.dataset,
            &mut self.eval.dataset,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::ConfigInvalid(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.qc.max_ratio < 1.0 {
            return bad(format!("qc.max_ratio must be at least 1, got {}", self.qc.max_ratio));
        }
        if self.eval.eval.k == 0 {
            return bad("eval.k must be at least 1".into());
        }
        self.synthesize
            .synthesis
            .validate()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        self.sample
            .solve
            .validate()
            .map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_resolves_paths() {
        let cfg = PipelineConfig::parse(
            r#"
            seed = 9
            out_dir = "out"
            [backend]
            kind = "scripted"
            script = "s.json"
            [web]
            fixture = "world"
            text_budget = 500
            [synthesize]
            min_visits = 3
            [eval]
            k = 2
            "#,
        )
        .unwrap();
        let mut c = cfg.clone();
        c.resolve_paths(Path::new("/base"));
        assert_eq!(c.out_dir, PathBuf::from("/base/out"));
        assert_eq!(c.web.fixture, Some(PathBuf::from("/base/world")));
        assert_eq!(c.backend, BackendChoice::Scripted { script: "/base/s.json".into() });
        assert_eq!(cfg.web.env.text_budget, 500);
        assert_eq!(cfg.synthesize.synthesis.min_visits, 3);
        assert_eq!(cfg.eval.eval.k, 2);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::parse("bogus = 1").is_err());
        let c = PipelineConfig::parse("workers = 0").unwrap();
        assert!(c.validate().is_err());
        let c = PipelineConfig::parse("[sample]\ntoolset = [\"Search\", \"Screenshot\"]").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn backend_flag() {
        assert_eq!(BackendChoice::from_flag("scripted:a.json").unwrap(), BackendChoice::Scripted { script: "a.json".into() });
        assert!(matches!(BackendChoice::from_flag("live").unwrap(), BackendChoice::Live { .. }));
        assert!(BackendChoice::from_flag("scripted:").is_err());
        assert!(BackendChoice::from_flag("other").is_err());
    }
}
