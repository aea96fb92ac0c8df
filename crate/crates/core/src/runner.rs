//! Manifest-driven batch execution. Each episode's log lands in a file
//! named by the hash of its job description, so reruns skip finished work.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{drive, PolicyKind, PolicyParams, PolicySpec};
use crate::curation::{sample_for, RenderOptions, TestDemoTiers};
use crate::episode::{EpisodeLog, EpisodeOptions, RewardMode, Session};
use crate::lookup::{load_bundle, LoadError, TaskBundle};
use crate::protocol::{
    run_episode_with_agent, AgentEndpoint, RunOptions, ScriptedAgent, ScriptedAgentSpec, SubprocessAgent,
    DEFAULT_TURN_TIMEOUT,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("manifest: {0}")]
    Invalid(String),
    #[error("bundle `{path}`: {source}")]
    Bundle { path: PathBuf, source: LoadError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_true() -> bool {
    true
}

/// One batch: every runner × experiment × budget × seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub bundles: Vec<PathBuf>,
    #[serde(default)]
    pub policies: Vec<PolicyKind>,
    /// Shared policy parameters; the seed is set per job.
    #[serde(default)]
    pub policy_params: PolicyParams,
    /// Shell command of an external agent speaking the JSON-lines protocol.
    #[serde(default)]
    pub agent_command: Option<String>,
    #[serde(default)]
    pub scripted_agent: Option<ScriptedAgentSpec>,
    /// Experiments to run; default is the bundle's high tier, or every
    /// experiment when the bundle has no fidelity split.
    #[serde(default)]
    pub experiments: Option<Vec<String>>,
    pub budgets: Vec<usize>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_true")]
    pub matching: bool,
    #[serde(default)]
    pub reward_mode: RewardMode,
    #[serde(default)]
    pub no_demos: bool,
    #[serde(default)]
    pub no_rich_text: bool,
    #[serde(default)]
    pub test_demos: TestDemoTiers,
    #[serde(default)]
    pub turn_timeout_secs: Option<u64>,
    pub out: PathBuf,
}

impl RunManifest {
    pub fn validate(&self) -> Result<(), RunError> {
        if self.bundles.is_empty() {
            return Err(RunError::Invalid("no bundles".into()));
        }
        if let Some(p) = self.bundles.iter().find(|p| !p.is_file()) {
            return Err(RunError::Invalid(format!("bundle `{}` does not exist", p.display())));
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return Err(RunError::Invalid("budgets must be non-empty and positive".into()));
        }
        let runners = self.policies.len() + self.agent_command.is_some() as usize + self.scripted_agent.is_some() as usize;
        if runners == 0 {
            return Err(RunError::Invalid("no policy or agent given".into()));
        }
        let stochastic = self.policies.iter().any(|p| *p != PolicyKind::Exhaustive);
        if stochastic && self.seeds.is_empty() {
            return Err(RunError::Invalid("stochastic policies need at least one seed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Runner {
    Policy(PolicySpec),
    Subprocess { command: String },
    Scripted(ScriptedAgentSpec),
}

impl Runner {
    pub fn method(&self) -> String {
        match self {
            Self::Policy(p) => p.name.as_str().into(),
            Self::Subprocess { .. } => "agent".into(),
            Self::Scripted(s) => match s {
                ScriptedAgentSpec::OptimalReplay => "scripted_optimal_replay".into(),
                ScriptedAgentSpec::NoisyFormat { .. } => "scripted_noisy_format".into(),
                ScriptedAgentSpec::FixedSequence { .. } => "scripted_fixed_sequence".into(),
            },
        }
    }
}

/// One manifest row. Its hash names the log file and the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    /// sha256 of the bundle file bytes.
    pub bundle_sha256: String,
    #[serde(skip)]
    pub bundle_index: usize,
    pub experiment: String,
    pub runner: Runner,
    pub budget: usize,
    pub seed: Option<u64>,
    pub matching: bool,
    pub reward_mode: RewardMode,
    pub render: RenderOptions,
    pub test_demos: TestDemoTiers,
    pub k: usize,
}

impl Job {
    pub fn id(&self) -> String {
        let text = serde_json::to_string(self).expect("jobs serialize");
        hex::encode(&Sha256::digest(text.as_bytes())[..12])
    }

    pub fn file_name(&self) -> String {
        format!("{}.jsonl", self.id())
    }

    fn options(&self) -> EpisodeOptions {
        EpisodeOptions {
            matching: self.matching,
            reward_mode: self.reward_mode,
            method: self.runner.method(),
            seed: self.seed,
            wall_clock: false,
        }
    }
}

pub struct LoadedBundle {
    pub path: PathBuf,
    pub sha256: String,
    pub bundle: TaskBundle,
}

pub fn load_bundles(paths: &[PathBuf]) -> Result<Vec<LoadedBundle>, RunError> {
    paths
        .iter()
        .map(|path| {
            let bytes = std::fs::read(path)?;
            let bundle = load_bundle(bytes.as_slice()).map_err(|source| RunError::Bundle {
                path: path.clone(),
                source,
            })?;
            Ok(LoadedBundle {
                path: path.clone(),
                sha256: hex::encode(Sha256::digest(&bytes)),
                bundle,
            })
        })
        .collect()
}

fn default_targets(bundle: &TaskBundle) -> Vec<String> {
    match crate::curation::order_by_fidelity(bundle) {
        Ok(split) if !split.high.is_empty() => split.high,
        _ => bundle.experiments.iter().map(|e| e.experiment_id.clone()).collect(),
    }
}

/// Expands the manifest into jobs in a fixed order.
pub fn plan(manifest: &RunManifest, bundles: &[LoadedBundle]) -> Result<Vec<Job>, RunError> {
    let mut runners: Vec<(Runner, bool)> = manifest
        .policies
        .iter()
        .map(|&name| {
            let spec = PolicySpec { name, params: manifest.policy_params.clone() };
            (Runner::Policy(spec), name != PolicyKind::Exhaustive)
        })
        .collect();
    if let Some(cmd) = &manifest.agent_command {
        runners.push((Runner::Subprocess { command: cmd.clone() }, true));
    }
    if let Some(spec) = &manifest.scripted_agent {
        let seeded = matches!(spec, ScriptedAgentSpec::NoisyFormat { .. });
        runners.push((Runner::Scripted(spec.clone()), seeded));
    }
    let render = RenderOptions {
        no_demos: manifest.no_demos,
        no_rich_text: manifest.no_rich_text,
    };

    let mut jobs = Vec::new();
    for (bi, lb) in bundles.iter().enumerate() {
        let b = &lb.bundle;
        let targets = manifest.experiments.clone().unwrap_or_else(|| default_targets(b));
        if let Some(t) = targets.iter().find(|t| b.experiment(t).is_none()) {
            return Err(RunError::Invalid(format!("bundle `{}` has no experiment `{t}`", b.task_id)));
        }
        let k = manifest.policy_params.k.or(b.top_k).unwrap_or(5);
        for (runner, seeded) in &runners {
            // Unseeded runners run once, tagged with the first seed if any.
            let seeds: Vec<Option<u64>> = if *seeded && !manifest.seeds.is_empty() {
                manifest.seeds.iter().copied().map(Some).collect()
            } else {
                vec![manifest.seeds.first().copied()]
            };
            for target in &targets {
                for &budget in &manifest.budgets {
                    for &seed in &seeds {
                        let runner = match runner {
                            Runner::Policy(p) => {
                                let mut p = p.clone();
                                p.params.seed = seed;
                                Runner::Policy(p)
                            }
                            Runner::Scripted(ScriptedAgentSpec::NoisyFormat { p, seed: s }) => {
                                Runner::Scripted(ScriptedAgentSpec::NoisyFormat { p: *p, seed: seed.unwrap_or(*s) })
                            }
                            other => other.clone(),
                        };
                        jobs.push(Job {
                            bundle_sha256: lb.sha256.clone(),
                            bundle_index: bi,
                            experiment: target.clone(),
                            runner,
                            budget,
                            seed,
                            matching: manifest.matching,
                            reward_mode: manifest.reward_mode,
                            render,
                            test_demos: manifest.test_demos,
                            k,
                        });
                    }
                }
            }
        }
    }
    Ok(jobs)
}

/// Runs one job to a finished log. Agent and protocol failures end the
/// episode (aborted) rather than erroring.
pub fn run_job(job: &Job, bundle: &TaskBundle, turn_timeout: Duration) -> Result<EpisodeLog, String> {
    let sample = sample_for(bundle, &job.experiment, job.budget, job.k, job.test_demos).map_err(|e| e.to_string())?;
    let table = bundle.experiment(&job.experiment).expect("checked by sample_for");
    let id = job.id();
    match &job.runner {
        Runner::Policy(spec) => {
            let demos: Vec<_> = sample
                .demos
                .iter()
                .filter_map(|d| bundle.experiment(&d.experiment_id))
                .collect();
            let mut policy = spec.build(table, &demos).map_err(|e| e.to_string())?;
            let mut session = Session::start(bundle, &job.experiment, job.budget, &id, job.options()).map_err(|e| e.to_string())?;
            if let Err(e) = drive(policy.as_mut(), &mut session, table) {
                session.abort(e.to_string());
            }
            Ok(session.log().clone())
        }
        Runner::Subprocess { command } => {
            let mut agent = SubprocessAgent::spawn(command).map_err(|e| format!("spawn `{command}`: {e}"))?;
            run_agent(&mut agent, job, bundle, &sample, id, turn_timeout)
        }
        Runner::Scripted(spec) => {
            let mut agent = ScriptedAgent::new(spec, table);
            run_agent(&mut agent, job, bundle, &sample, id, turn_timeout)
        }
    }
}

fn run_agent(
    agent: &mut dyn AgentEndpoint,
    job: &Job,
    bundle: &TaskBundle,
    sample: &crate::curation::CurationSample,
    episode_id: String,
    turn_timeout: Duration,
) -> Result<EpisodeLog, String> {
    let opts = RunOptions {
        episode_id,
        episode: job.options(),
        render: job.render,
        turn_timeout,
    };
    run_episode_with_agent(agent, sample, bundle, &opts)
        .map(|r| r.log)
        .map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobStatus {
    Written,
    Skipped,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub file: PathBuf,
    #[serde(flatten)]
    pub status: JobStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub outcomes: Vec<JobOutcome>,
}

impl RunSummary {
    pub fn count(&self, f: impl Fn(&JobStatus) -> bool) -> usize {
        self.outcomes.iter().filter(|o| f(&o.status)).count()
    }
}

/// Executes every job on up to `jobs` threads. Existing log files are left
/// untouched.
pub fn execute(manifest: &RunManifest, jobs: usize) -> Result<RunSummary, RunError> {
    manifest.validate()?;
    let bundles = load_bundles(&manifest.bundles)?;
    let plan = plan(manifest, &bundles)?;
    std::fs::create_dir_all(&manifest.out)?;
    let timeout = manifest.turn_timeout_secs.map_or(DEFAULT_TURN_TIMEOUT, Duration::from_secs);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| RunError::Invalid(e.to_string()))?;
    let outcomes = pool.install(|| {
        plan.par_iter()
            .map(|job| {
                let file = manifest.out.join(job.file_name());
                let status = if file.exists() {
                    JobStatus::Skipped
                } else {
                    match run_job(job, &bundles[job.bundle_index].bundle, timeout)
                        .and_then(|log| write_atomic(&file, &log.to_jsonl()).map_err(|e| e.to_string()))
                    {
                        Ok(()) => JobStatus::Written,
                        Err(error) => JobStatus::Failed { error },
                    }
                };
                JobOutcome { file, status }
            })
            .collect()
    });
    Ok(RunSummary { outcomes })
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(tmp, path)
}

/// Reads every `*.jsonl` log in `dir`, sorted by file name.
pub fn load_logs(dir: &Path) -> Result<Vec<EpisodeLog>, RunError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            EpisodeLog::from_jsonl(&text).map_err(|e| RunError::Invalid(format!("{}: {e}", p.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lookup::write_bundle;
    use crate::synth::{GrpoSpec, gen_grpo_task};

    fn manifest(dir: &Path) -> RunManifest {
        let bundle = gen_grpo_task(&GrpoSpec::default()).unwrap();
        let path = dir.join("grpo.json");
        std::fs::write(&path, write_bundle(&bundle)).unwrap();
        RunManifest {
            bundles: vec![path],
            policies: vec![PolicyKind::Random],
            policy_params: PolicyParams::default(),
            agent_command: None,
            scripted_agent: None,
            experiments: Some(vec!["gsm8k-768".into()]),
            budgets: (1..=5).collect(),
            seeds: vec![0, 1, 2],
            matching: true,
            reward_mode: RewardMode::Strict,
            no_demos: false,
            no_rich_text: false,
            test_demos: TestDemoTiers::Medium,
            turn_timeout_secs: None,
            out: dir.join("logs"),
        }
    }

    #[test]
    fn product_of_budgets_and_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        let s = execute(&m, 4).unwrap();
        assert_eq!(s.count(|st| *st == JobStatus::Written), 15);
        let again = execute(&m, 2).unwrap();
        assert_eq!(again.count(|st| *st == JobStatus::Skipped), 15);
        assert_eq!(load_logs(&m.out).unwrap().len(), 15);
    }

    #[test]
    fn job_ids_are_stable_and_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        let b = load_bundles(&m.bundles).unwrap();
        let a = plan(&m, &b).unwrap();
        let ids: std::collections::HashSet<_> = a.iter().map(Job::id).collect();
        assert_eq!(ids.len(), a.len());
        assert_eq!(plan(&m, &b).unwrap(), a);
    }

    #[test]
    fn missing_seed_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest { seeds: vec![], ..manifest(dir.path()) };
        assert!(matches!(m.validate(), Err(RunError::Invalid(_))));
    }

    #[test]
    fn scripted_agent_runs_through_protocol() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest {
            policies: vec![],
            scripted_agent: Some(ScriptedAgentSpec::OptimalReplay),
            budgets: vec![1],
            seeds: vec![],
            ..manifest(dir.path())
        };
        let s = execute(&m, 1).unwrap();
        assert_eq!(s.outcomes.len(), 1);
        let logs = load_logs(&m.out).unwrap();
        assert_eq!(logs[0].summary.as_ref().unwrap().reward, 0.0);
    }
}
