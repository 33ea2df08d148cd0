use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::analyze::analyze_dataset;
use super::manifest::{ItemRecord, ItemRun, ItemRunner, ItemStatus, RunManifest, Stage};
use super::{Pipeline, PipelineError, RunOptions, StageOutcome};
use crate::agent::{system_preamble, Termination, Trajectory};
use crate::dataset::{derive_seed, load_dataset, read_jsonl, write_atomic, write_jsonl, QASampleRecord};
use crate::eval::{aggregate, eval_task, validate_dataset, EvalOutcome};
use crate::qc::{check_sample, finalize, prefilter, QcReport, Quarantined};
use crate::sampler::{export_sft, filter_trajectories, judge_answer, solve_task, SftRecord, SolveAttempt, Verdict};
use crate::synth::{collect_anchors, run_synthesis, sample_emphasis, AnchorEntry, AnchorPool, CandidateSample};
use crate::taxonomy::{histogram, rarity_weights};
use crate::web::Toolset;

pub const ANCHORS: &str = "anchors.jsonl";
pub const ANCHORS_SKIPPED: &str = "anchors_skipped.jsonl";
pub const CANDIDATES: &str = "candidates.jsonl";
pub const SYNTH_FAILURES: &str = "synth_failures.jsonl";
pub const CONSTRUCTION: &str = "trajectories/construction.jsonl";
pub const DATASET: &str = "dataset.jsonl";
pub const QUARANTINE: &str = "quarantine.jsonl";
pub const CHECKS: &str = "trajectories/check.jsonl";
pub const ATTEMPTS: &str = "attempts.jsonl";
pub const SFT: &str = "sft.jsonl";
pub const EVAL_OUTCOMES: &str = "eval/outcomes.jsonl";
pub const EVAL_TRAJECTORIES: &str = "eval/trajectories.jsonl";
pub const EVAL_REPORT: &str = "eval/report.json";
pub const EVAL_TABLE: &str = "eval/report.txt";
pub const ANALYSIS: &str = "analysis.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFailure {
    pub id: String,
    pub anchor_url: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPart {
    pub candidate: Option<CandidateSample>,
    pub trajectory: Option<Trajectory>,
    pub failure: Option<SynthFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckPart {
    pub result: Result<QcReport, String>,
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedAttempt {
    #[serde(flatten)]
    pub attempt: SolveAttempt,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EvalPart {
    outcome: EvalOutcome,
    trajectories: Vec<Trajectory>,
}

fn done<P>(_: &P) -> ItemRecord {
    ItemRecord {
        status: ItemStatus::Done,
        note: None,
    }
}

fn io<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> PipelineError + '_ {
    move |e| PipelineError::Io(format!("{}: {e}", path.display()))
}

impl Pipeline {
    fn write_jsonl_out<T: Serialize>(&self, manifest: &mut RunManifest, rel: &str, items: &[T]) -> Result<(), PipelineError> {
        let path = self.path(rel);
        write_jsonl(&path, items).map_err(io(&path))?;
        manifest.outputs.push(rel.to_string());
        Ok(())
    }

    fn write_text_out(&self, manifest: &mut RunManifest, rel: &str, text: &str) -> Result<(), PipelineError> {
        let path = self.path(rel);
        write_atomic(&path, text.as_bytes()).map_err(io(&path))?;
        manifest.outputs.push(rel.to_string());
        Ok(())
    }

    /// Shared tail of itemized stages: unfinished runs save the manifest
    /// and stop; complete runs hand the parts to `assemble`.
    fn finish<P>(
        &self,
        stage: Stage,
        runner: ItemRunner<'_>,
        run: ItemRun<P>,
        assemble: impl FnOnce(&mut RunManifest, Vec<P>) -> Result<(), PipelineError>,
    ) -> Result<StageOutcome, PipelineError> {
        let mut manifest = runner.into_manifest();
        let processed = run.processed;
        if !run.failures.is_empty() {
            manifest.complete = false;
            manifest.save(self.run_dir())?;
            let list: Vec<String> = run.failures.iter().map(|(k, e)| format!("{k}: {e}")).collect();
            return Err(PipelineError::StageFailed {
                stage,
                reason: list.join("; "),
            });
        }
        if !run.complete() {
            manifest.complete = false;
            manifest.save(self.run_dir())?;
            return Ok(StageOutcome { manifest, processed });
        }
        manifest.outputs.clear();
        manifest.counts.clear();
        assemble(&mut manifest, run.parts.into_iter().map(|p| p.expect("complete run")).collect())?;
        manifest.complete = true;
        manifest.save(self.run_dir())?;
        Ok(StageOutcome { manifest, processed })
    }

    pub(super) fn stage_anchors(&self, options: RunOptions) -> Result<StageOutcome, PipelineError> {
        let section = &self.config.anchors;
        if section.queries.iter().all(|q| q.trim().is_empty()) {
            return Err(PipelineError::ConfigInvalid("anchors.queries is empty".into()));
        }
        let manifest = self.begin(Stage::Anchors, serde_json::json!(section), &[], options)?;
        let items: Vec<(String, String)> = section
            .queries
            .iter()
            .enumerate()
            .map(|(i, q)| (format!("query-{i:03}"), q.clone()))
            .collect();
        let runner = ItemRunner::new(self.run_dir(), manifest);
        let run = runner.run(
            &items,
            options.limit,
            |_, q| {
                Ok(collect_anchors(
                    std::slice::from_ref(q),
                    section.per_query,
                    &*self.env.backend,
                    &self.env.blacklist,
                    &self.gateway,
                ))
            },
            done::<AnchorPool>,
        )?;
        self.finish(Stage::Anchors, runner, run, |m, pools| {
            let mut seen = BTreeSet::new();
            let mut entries = Vec::new();
            let mut skipped = Vec::new();
            for pool in pools {
                for e in pool.entries {
                    if seen.insert(e.url.clone()) {
                        entries.push(e);
                    }
                }
                for (url, reason) in pool.skipped {
                    skipped.push(serde_json::json!({ "url": url, "reason": reason }));
                }
            }
            m.counts.insert("anchors".into(), entries.len());
            m.counts.insert("skipped".into(), skipped.len());
            self.write_jsonl_out(m, ANCHORS, &entries)?;
            self.write_jsonl_out(m, ANCHORS_SKIPPED, &skipped)
        })
    }

    pub(super) fn stage_synthesize(&self, options: RunOptions) -> Result<StageOutcome, PipelineError> {
        let section = &self.config.synthesize;
        let anchors_path = self.path(ANCHORS);
        let mut inputs: Vec<&Path> = vec![&anchors_path];
        if let Some(p) = &section.prior_corpus {
            inputs.push(p);
        }
        let manifest = self.begin(Stage::Synthesize, serde_json::json!(section.synthesis), &inputs, options)?;
        let anchors: Vec<AnchorEntry> = read_jsonl(&anchors_path).map_err(|e| PipelineError::Io(e.to_string()))?;
        let prior = match &section.prior_corpus {
            Some(p) => load_dataset(p).map_err(|e| PipelineError::Io(e.to_string()))?,
            None => Vec::new(),
        };
        let weights = rarity_weights(&histogram(prior.iter().flat_map(|r| &r.aggregation_ops)))
            .map_err(|e| PipelineError::StageFailed {
                stage: Stage::Synthesize,
                reason: e.to_string(),
            })?;
        let items: Vec<(String, AnchorEntry)> = anchors
            .into_iter()
            .enumerate()
            .map(|(i, a)| (format!("cand-{i:04}"), a))
            .collect();
        let runner = ItemRunner::new(self.run_dir(), manifest);
        let run = runner.run(
            &items,
            options.limit,
            |id, anchor| {
                let seed = derive_seed(self.config.seed, id);
                let emphasis = sample_emphasis(&weights, section.synthesis.emphasis_slots, seed);
                let mut session = self.env.session(Toolset::full());
                Ok(
                    match run_synthesis(id, anchor, &section.synthesis, &emphasis, seed, &mut session, &self.gateway) {
                        Ok((c, t)) => SynthPart {
                            candidate: Some(c),
                            trajectory: Some(t),
                            failure: None,
                        },
                        Err((e, t)) => SynthPart {
                            candidate: None,
                            trajectory: t.map(|t| *t),
                            failure: Some(SynthFailure {
                                id: id.to_string(),
                                anchor_url: anchor.url.clone(),
                                error: e.to_string(),
                            }),
                        },
                    },
                )
            },
            |p: &SynthPart| ItemRecord {
                status: if p.candidate.is_some() { ItemStatus::Done } else { ItemStatus::Failed },
                note: p.failure.as_ref().map(|f| f.error.clone()),
            },
        )?;
        self.finish(Stage::Synthesize, runner, run, |m, parts| {
            let mut candidates = Vec::new();
            let mut trajectories = Vec::new();
            let mut failures = Vec::new();
            for p in parts {
                candidates.extend(p.candidate);
                trajectories.extend(p.trajectory);
                failures.extend(p.failure);
            }
            m.counts.insert("candidates".into(), candidates.len());
            m.counts.insert("failed".into(), failures.len());
            self.write_jsonl_out(m, CANDIDATES, &candidates)?;
            self.write_jsonl_out(m, SYNTH_FAILURES, &failures)?;
            self.write_jsonl_out(m, CONSTRUCTION, &trajectories)
        })
    }

    pub(super) fn stage_qc(&self, options: RunOptions) -> Result<StageOutcome, PipelineError> {
        let cfg = &self.config.qc;
        let cand_path = self.path(CANDIDATES);
        let manifest = self.begin(Stage::Qc, serde_json::json!(cfg), &[&cand_path], options)?;
        let candidates: Vec<CandidateSample> = read_jsonl(&cand_path).map_err(|e| PipelineError::Io(e.to_string()))?;
        let (pending, rejected) = prefilter(&candidates, &self.env.blacklist, cfg);
        let items: Vec<(String, usize)> = pending.iter().map(|i| (candidates[*i].id.clone(), *i)).collect();
        let runner = ItemRunner::new(self.run_dir(), manifest);
        let run = runner.run(
            &items,
            options.limit,
            |_, i| {
                Ok(match check_sample(&candidates[*i], &self.env, &self.gateway, cfg) {
                    Ok(out) => CheckPart {
                        result: Ok(out.report),
                        trajectory: out.trajectory,
                    },
                    Err(e) => CheckPart {
                        result: Err(e.to_string()),
                        trajectory: None,
                    },
                })
            },
            |p: &CheckPart| ItemRecord {
                status: match &p.result {
                    Ok(r) if r.accepted() => ItemStatus::Done,
                    _ => ItemStatus::Failed,
                },
                note: None,
            },
        )?;
        let seed = derive_seed(self.config.seed, "qc-balance");
        self.finish(Stage::Qc, runner, run, |m, parts| {
            let mut trajectories = Vec::new();
            let mut checked = Vec::new();
            for ((_, i), p) in items.iter().zip(parts) {
                trajectories.extend(p.trajectory);
                checked.push((*i, p.result));
            }
            let (accepted, quarantine): (Vec<QASampleRecord>, Vec<Quarantined>) =
                finalize(&candidates, checked, rejected, cfg, seed);
            m.counts.insert("candidates".into(), candidates.len());
            m.counts.insert("accepted".into(), accepted.len());
            m.counts.insert("rejected".into(), quarantine.len());
            self.write_jsonl_out(m, DATASET, &accepted)?;
            self.write_jsonl_out(m, QUARANTINE, &quarantine)?;
            self.write_jsonl_out(m, CHECKS, &trajectories)
        })
    }

    fn dataset_path(&self, configured: &Option<PathBuf>) -> PathBuf {
        configured.clone().unwrap_or_else(|| self.path(DATASET))
    }

    pub(super) fn stage_sample(&self, options: RunOptions) -> Result<StageOutcome, PipelineError> {
        let solve = &self.config.sample.solve;
        let data_path = self.dataset_path(&self.config.sample.dataset);
        let manifest = self.begin(Stage::Sample, serde_json::json!(solve), &[&data_path], options)?;
        let dataset = load_dataset(&data_path).map_err(|e| PipelineError::Io(e.to_string()))?;
        let items: Vec<(String, QASampleRecord)> = dataset.into_iter().map(|r| (r.id.clone(), r)).collect();
        let runner = ItemRunner::new(self.run_dir(), manifest);
        let run = runner.run(
            &items,
            options.limit,
            |id, sample| {
                let attempts = solve_task(sample, &self.env, &self.gateway, solve, derive_seed(self.config.seed, id))
                    .map_err(|e| e.to_string())?;
                attempts
                    .into_iter()
                    .map(|a| {
                        let verdict = match (&a.trajectory.termination, &a.trajectory.final_answer) {
                            (Termination::FinalAnswer, Some(ans)) => {
                                judge_answer(&sample.question, &sample.answer, ans, &self.gateway).map_err(|e| e.to_string())?
                            }
                            _ => Verdict {
                                correct: false,
                                rationale: "no final answer".into(),
                            },
                        };
                        Ok(JudgedAttempt { attempt: a, verdict })
                    })
                    .collect::<Result<Vec<_>, String>>()
            },
            done::<Vec<JudgedAttempt>>,
        )?;
        self.finish(Stage::Sample, runner, run, |m, parts| {
            let all: Vec<JudgedAttempt> = parts.into_iter().flatten().collect();
            m.counts.insert("attempts".into(), all.len());
            m.counts.insert("correct".into(), all.iter().filter(|a| a.verdict.correct).count());
            self.write_jsonl_out(m, ATTEMPTS, &all)
        })
    }

    pub(super) fn stage_export(&self, options: RunOptions) -> Result<StageOutcome, PipelineError> {
        let solve = &self.config.sample.solve;
        let attempts_path = self.path(ATTEMPTS);
        let settings = serde_json::json!({ "export": self.config.export, "solver": solve });
        let mut manifest = self.begin(Stage::ExportSft, settings, &[&attempts_path], options)?;
        if manifest.complete {
            return Ok(StageOutcome { manifest, processed: 0 });
        }
        let attempts: Vec<JudgedAttempt> = read_jsonl(&attempts_path).map_err(|e| PipelineError::Io(e.to_string()))?;
        let trajectories: Vec<Trajectory> = attempts.iter().map(|a| a.attempt.trajectory.clone()).collect();
        let verdicts: Vec<Verdict> = attempts.iter().map(|a| a.verdict.clone()).collect();
        let (kept, counts) = filter_trajectories(&trajectories, &verdicts);
        let system = self
            .config
            .export
            .include_system
            .then(|| system_preamble(&solve.toolset, &solve.agent.instructions));
        let records: Vec<SftRecord> = kept
            .iter()
            .map(|&i| export_sft(&trajectories[i], &verdicts[i], system.as_deref(), solve.agent.truncation_budget))
            .collect::<Result<_, _>>()
            .map_err(|e| PipelineError::StageFailed {
                stage: Stage::ExportSft,
                reason: e.to_string(),
            })?;
        manifest.outputs.clear();
        manifest.counts = BTreeMap::from([
            ("kept".to_string(), counts.kept),
            ("incorrect".to_string(), counts.incorrect),
            ("format".to_string(), counts.format),
            ("fatal".to_string(), counts.fatal),
            ("budget_exhausted".to_string(), counts.budget_exhausted),
        ]);
        self.write_jsonl_out(&mut manifest, SFT, &records)?;
        manifest.items.insert(
            "all".into(),
            ItemRecord {
                status: ItemStatus::Done,
                note: None,
            },
        );
        manifest.complete = true;
        manifest.save(self.run_dir())?;
        Ok(StageOutcome { manifest, processed: 1 })
    }

    pub(super) fn stage_eval(&self, options: RunOptions) -> Result<StageOutcome, PipelineError> {
        let cfg = &self.config.eval.eval;
        let data_path = self.dataset_path(&self.config.eval.dataset);
        let manifest = self.begin(Stage::Eval, serde_json::json!(cfg), &[&data_path], options)?;
        let dataset = load_dataset(&data_path).map_err(|e| PipelineError::Io(e.to_string()))?;
        validate_dataset(&dataset, cfg.k).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
        let items: Vec<(String, QASampleRecord)> = dataset.into_iter().map(|r| (r.id.clone(), r)).collect();
        let runner = ItemRunner::new(self.run_dir(), manifest);
        let run = runner.run(
            &items,
            options.limit,
            |_, sample| {
                let (outcome, trajectories) = eval_task(sample, &self.env, &self.gateway, cfg).map_err(|e| e.to_string())?;
                Ok(EvalPart { outcome, trajectories })
            },
            done::<EvalPart>,
        )?;
        self.finish(Stage::Eval, runner, run, |m, parts| {
            let mut outcomes = Vec::new();
            let mut trajectories = Vec::new();
            for p in parts {
                outcomes.push(p.outcome);
                trajectories.extend(p.trajectories);
            }
            let report = aggregate(&outcomes, cfg.k).map_err(|e| PipelineError::StageFailed {
                stage: Stage::Eval,
                reason: e.to_string(),
            })?;
            m.counts.insert("tasks".into(), outcomes.len());
            m.counts.insert("exception_retries".into(), report.exception_retries);
            self.write_jsonl_out(m, EVAL_OUTCOMES, &outcomes)?;
            self.write_jsonl_out(m, EVAL_TRAJECTORIES, &trajectories)?;
            let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
            json.push('\n');
            self.write_text_out(m, EVAL_REPORT, &json)?;
            self.write_text_out(m, EVAL_TABLE, &report.table())
        })
    }

    pub(super) fn stage_analyze(&self, options: RunOptions) -> Result<StageOutcome, PipelineError> {
        let data_path = self.dataset_path(&self.config.eval.dataset);
        let mut manifest = self.begin(Stage::Analyze, serde_json::Value::Null, &[&data_path], options)?;
        if manifest.complete {
            return Ok(StageOutcome { manifest, processed: 0 });
        }
        let dataset = load_dataset(&data_path).map_err(|e| PipelineError::Io(e.to_string()))?;
        let analysis = analyze_dataset(&dataset);
        let mut json = serde_json::to_string_pretty(&analysis).expect("analysis serializes");
        json.push('\n');
        manifest.outputs.clear();
        manifest.counts = BTreeMap::from([("samples".to_string(), dataset.len())]);
        self.write_text_out(&mut manifest, ANALYSIS, &json)?;
        manifest.items.insert(
            "all".into(),
            ItemRecord {
                status: ItemStatus::Done,
                note: None,
            },
        );
        manifest.complete = true;
        manifest.save(self.run_dir())?;
        Ok(StageOutcome { manifest, processed: 1 })
    }
}
