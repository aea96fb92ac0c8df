//! Command-line front end. Every flag can also come from a `CONFIGYM_*`
//! environment variable; flags win.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::PolicyKind;
use crate::cost::{cost_report, cumulative_cost_curves, CostModelParams, CostScenario};
use crate::curation::{build_samples, order_by_fidelity, CurationRecord, RenderOptions, TestDemoTiers};
use crate::episode::{EpisodeLog, RewardMode};
use crate::lookup::load_bundle_file;
use crate::report::{aggregate_report, Grouping};
use crate::runner::{execute, load_logs, JobStatus, RunManifest};
use crate::server::{serve, AppState};
use crate::synth::{write_bundles, PretrainSpec, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "configym", version, about = "Multi-fidelity configuration gym")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic task bundles plus a provenance manifest.
    Gen(GenArgs),
    /// Build cross-fidelity training and test prompts from a bundle.
    Curate(CurateArgs),
    /// Run policies or agents over bundles and write episode logs.
    Run(RunArgs),
    /// Aggregate episode logs into a regret table and plot.
    Report(ReportArgs),
    /// Evaluate the upfront-training cost model.
    Cost(CostArgs),
    /// Serve bundles and episodes over HTTP.
    Serve(ServeArgs),
    /// Recompute an episode log's summary and compare it with the stored one.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Pretrain,
    Architecture,
    Grpo,
    Mixture,
    All,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, env = "CONFIGYM_TASK", value_enum, conflicts_with = "spec")]
    pub task: Option<TaskArg>,
    /// JSON file holding one spec or a list of specs.
    #[arg(long, env = "CONFIGYM_SPEC")]
    pub spec: Option<PathBuf>,
    #[arg(long, env = "CONFIGYM_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "CONFIGYM_OUT")]
    pub out: PathBuf,
    /// GRPO: put the train optimum on the test pessimum.
    #[arg(long)]
    pub reversed: bool,
    /// Pretrain: zero every optimum-drift exponent.
    #[arg(long)]
    pub no_shift: bool,
    /// Mixture: fraction of train-tier candidates kept.
    #[arg(long)]
    pub coverage: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[arg(long, env = "CONFIGYM_BUNDLE")]
    pub bundle: PathBuf,
    /// Demo block size; defaults to the bundle's top_k, else 3.
    #[arg(long, env = "CONFIGYM_K")]
    pub k: Option<usize>,
    #[arg(long, env = "CONFIGYM_BUDGETS", value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub budgets: Vec<usize>,
    #[arg(long, value_enum, default_value_t = DemoTiersArg::Medium)]
    pub test_demos: DemoTiersArg,
    #[arg(long)]
    pub no_demos: bool,
    #[arg(long)]
    pub no_rich_text: bool,
    /// Output JSON-lines file; stdout when absent.
    #[arg(long, env = "CONFIGYM_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DemoTiersArg {
    Medium,
    MediumAndLow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RewardArg {
    Strict,
    Lenient,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Manifest file; flags below override its fields.
    #[arg(long, env = "CONFIGYM_MANIFEST")]
    pub manifest: Option<PathBuf>,
    #[arg(long = "bundle", env = "CONFIGYM_BUNDLE", value_delimiter = ',')]
    pub bundles: Vec<PathBuf>,
    #[arg(long = "policy", env = "CONFIGYM_POLICY", value_delimiter = ',')]
    pub policies: Vec<String>,
    /// Shell command of an agent speaking the JSON-lines protocol.
    #[arg(long, env = "CONFIGYM_AGENT_ENDPOINT")]
    pub agent_endpoint: Option<String>,
    #[arg(long = "experiment", value_delimiter = ',')]
    pub experiments: Vec<String>,
    /// Budgets, comma separated or as a range `1..5`.
    #[arg(long, env = "CONFIGYM_BUDGET")]
    pub budget: Option<String>,
    /// Seeds, comma separated or as a range `0..2`.
    #[arg(long, env = "CONFIGYM_SEED")]
    pub seed: Option<String>,
    #[arg(long, env = "CONFIGYM_MATCHING", value_enum)]
    pub matching: Option<OnOff>,
    #[arg(long, env = "CONFIGYM_REWARD_MODE", value_enum)]
    pub reward_mode: Option<RewardArg>,
    #[arg(long)]
    pub no_demos: bool,
    #[arg(long)]
    pub no_rich_text: bool,
    #[arg(long, env = "CONFIGYM_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "CONFIGYM_JOBS", default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, env = "CONFIGYM_LOGS")]
    pub logs: PathBuf,
    #[arg(long, env = "CONFIGYM_GROUPING", default_value = "method_task_budget")]
    pub grouping: String,
    /// Directory for report.tsv, report.json and report.svg.
    #[arg(long, env = "CONFIGYM_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long, env = "CONFIGYM_SCENARIO")]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<u64>,
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub e_m: Option<f64>,
    #[arg(long)]
    pub s_base: Option<f64>,
    #[arg(long)]
    pub s_meta: Option<f64>,
    #[arg(long)]
    pub t_hf: Option<f64>,
    #[arg(long)]
    pub t_lf: Option<f64>,
    /// Range of K for the curves, `lo..hi`.
    #[arg(long)]
    pub k_range: Option<String>,
    #[arg(long, env = "CONFIGYM_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "CONFIGYM_BUNDLES")]
    pub bundles: PathBuf,
    #[arg(long, env = "CONFIGYM_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "CONFIGYM_PORT", default_value_t = 8080)]
    pub port: u16,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub log: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Parses `3`, `1,2,5` or `1..5` (inclusive).
pub fn parse_list(text: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad range `{text}`"))?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad range `{text}`"))?;
        if a > b {
            return Err(format!("empty range `{text}`"));
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| format!("bad number `{s}`")))
        .collect()
}

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<(), String> {
    let specs: Vec<SynthSpec> = match (&a.spec, a.task) {
        (Some(path), _) => {
            let v: serde_json::Value = read_json(path)?;
            if v.is_array() {
                serde_json::from_value(v).map_err(|e| e.to_string())?
            } else {
                vec![serde_json::from_value(v).map_err(|e| e.to_string())?]
            }
        }
        (None, Some(task)) => {
            let names: &[&str] = match task {
                TaskArg::Pretrain => &["pretrain"],
                TaskArg::Architecture => &["architecture"],
                TaskArg::Grpo => &["grpo"],
                TaskArg::Mixture => &["mixture"],
                TaskArg::All => &["pretrain", "architecture", "grpo", "mixture"],
            };
            names
                .iter()
                .map(|n| {
                    let mut spec = SynthSpec::default_for(n, a.seed).expect("known task");
                    match &mut spec {
                        SynthSpec::Grpo(g) => g.reversed = a.reversed,
                        SynthSpec::Pretrain(p) if a.no_shift => *p = PretrainSpec::no_shift(a.seed),
                        SynthSpec::Mixture(m) => {
                            if let Some(c) = a.coverage {
                                m.coverage = c;
                            }
                        }
                        _ => {}
                    }
                    spec
                })
                .collect()
        }
        (None, None) => return Err("give --task or --spec".into()),
    };
    let manifest = write_bundles(&specs, &a.out).map_err(|e| e.to_string())?;
    for e in &manifest.bundles {
        writeln!(out, "{}\t{}", a.out.join(&e.file).display(), e.sha256).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn cmd_curate(a: &CurateArgs, out: &mut dyn Write) -> Result<(), String> {
    let bundle = load_bundle_file(&a.bundle).map_err(|e| format!("{}: {e}", a.bundle.display()))?;
    let split = order_by_fidelity(&bundle).map_err(|e| e.to_string())?;
    let k = a.k.or(bundle.top_k).unwrap_or(3);
    let tiers = match a.test_demos {
        DemoTiersArg::Medium => TestDemoTiers::Medium,
        DemoTiersArg::MediumAndLow => TestDemoTiers::MediumAndLow,
    };
    let samples = build_samples(&bundle, &split, k, &a.budgets, tiers).map_err(|e| e.to_string())?;
    let opts = RenderOptions {
        no_demos: a.no_demos,
        no_rich_text: a.no_rich_text,
    };
    let mut text = String::new();
    for s in &samples {
        text.push_str(&serde_json::to_string(&CurationRecord::sample(s, &bundle, opts)).expect("serializable"));
        text.push('\n');
    }
    match &a.out {
        Some(p) => {
            write(p, &text)?;
            writeln!(out, "{} samples -> {}", samples.len(), p.display()).map_err(|e| e.to_string())
        }
        None => out.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn run_manifest(a: &RunArgs) -> Result<RunManifest, String> {
    let mut m = match &a.manifest {
        Some(p) => read_json::<RunManifest>(p)?,
        None => RunManifest {
            bundles: vec![],
            policies: vec![],
            policy_params: Default::default(),
            agent_command: None,
            scripted_agent: None,
            experiments: None,
            budgets: vec![],
            seeds: vec![],
            matching: true,
            reward_mode: RewardMode::Strict,
            no_demos: false,
            no_rich_text: false,
            test_demos: TestDemoTiers::Medium,
            turn_timeout_secs: None,
            out: PathBuf::from("logs"),
        },
    };
    if !a.bundles.is_empty() {
        m.bundles = a.bundles.clone();
    }
    if !a.policies.is_empty() {
        m.policies = a
            .policies
            .iter()
            .map(|p| p.parse::<PolicyKind>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
    }
    if a.agent_endpoint.is_some() {
        m.agent_command = a.agent_endpoint.clone();
    }
    if !a.experiments.is_empty() {
        m.experiments = Some(a.experiments.clone());
    }
    if let Some(b) = &a.budget {
        m.budgets = parse_list(b)?.into_iter().map(|x| x as usize).collect();
    }
    if let Some(s) = &a.seed {
        m.seeds = parse_list(s)?;
    }
    if let Some(x) = a.matching {
        m.matching = x == OnOff::On;
    }
    if let Some(r) = a.reward_mode {
        m.reward_mode = match r {
            RewardArg::Strict => RewardMode::Strict,
            RewardArg::Lenient => RewardMode::Lenient,
        };
    }
    m.no_demos |= a.no_demos;
    m.no_rich_text |= a.no_rich_text;
    if let Some(o) = &a.out {
        m.out = o.clone();
    }
    Ok(m)
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<(), String> {
    let m = run_manifest(a)?;
    let summary = execute(&m, a.jobs).map_err(|e| e.to_string())?;
    for o in &summary.outcomes {
        if let JobStatus::Failed { error } = &o.status {
            eprintln!("{}: {error}", o.file.display());
        }
    }
    writeln!(
        out,
        "written {} skipped {} failed {}",
        summary.count(|s| *s == JobStatus::Written),
        summary.count(|s| *s == JobStatus::Skipped),
        summary.count(|s| matches!(s, JobStatus::Failed { .. }))
    )
    .map_err(|e| e.to_string())
}

fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> Result<(), String> {
    let grouping: Grouping = a.grouping.parse().map_err(|e: crate::report::ReportError| e.to_string())?;
    let logs = load_logs(&a.logs).map_err(|e| e.to_string())?;
    let report = aggregate_report(&logs, grouping).map_err(|e| e.to_string())?;
    let tsv = report.to_tsv();
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        write(&dir.join("report.tsv"), &tsv)?;
        write(&dir.join("report.json"), &pretty(&report))?;
        write(&dir.join("report.svg"), &report.to_svg())?;
    }
    out.write_all(tsv.as_bytes()).map_err(|e| e.to_string())
}

fn cmd_cost(a: &CostArgs, out: &mut dyn Write) -> Result<(), String> {
    let mut scenario = match &a.scenario {
        Some(p) => read_json::<CostScenario>(p)?,
        None => CostScenario {
            name: "cli".into(),
            synthetic: true,
            note: String::new(),
            params: CostModelParams {
                k: 0,
                m: 0,
                e_m: 0.0,
                s_base: 0.0,
                s_meta: 0.0,
                t_hf: 0.0,
                t_lf: 1.0,
            },
            k_range: [0, 50],
        },
    };
    let p = &mut scenario.params;
    p.k = a.k.unwrap_or(p.k);
    p.m = a.m.unwrap_or(p.m);
    p.e_m = a.e_m.unwrap_or(p.e_m);
    p.s_base = a.s_base.unwrap_or(p.s_base);
    p.s_meta = a.s_meta.unwrap_or(p.s_meta);
    p.t_hf = a.t_hf.unwrap_or(p.t_hf);
    p.t_lf = a.t_lf.unwrap_or(p.t_lf);
    if let Some(r) = &a.k_range {
        let ks = parse_list(r)?;
        scenario.k_range = [ks[0], *ks.last().expect("non-empty")];
    }
    let report = cost_report(&scenario.params).map_err(|e| e.to_string())?;
    let curves = cumulative_cost_curves(&scenario.params, &scenario.ks()).map_err(|e| e.to_string())?;
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
        write(&dir.join("cost.json"), &pretty(&report))?;
        write(&dir.join("curves.tsv"), &curves.to_tsv())?;
        write(&dir.join("curves.svg"), &curves.to_svg())?;
    }
    out.write_all(pretty(&report).as_bytes()).map_err(|e| e.to_string())
}

fn cmd_serve(a: &ServeArgs, out: &mut dyn Write) -> Result<(), String> {
    let state = AppState::from_dir(&a.bundles)?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| format!("bad address: {e}"))?;
    writeln!(out, "listening on http://{addr}").map_err(|e| e.to_string())?;
    out.flush().map_err(|e| e.to_string())?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(serve(state, addr)).map_err(|e| e.to_string())
}

fn cmd_replay(a: &ReplayArgs, out: &mut dyn Write) -> Result<(), String> {
    let text = std::fs::read_to_string(&a.log).map_err(|e| format!("{}: {e}", a.log.display()))?;
    let log = EpisodeLog::from_jsonl(&text).map_err(|e| e.to_string())?;
    let replayed = log.replay();
    out.write_all(pretty(&replayed).as_bytes()).map_err(|e| e.to_string())?;
    match &log.summary {
        Some(s) if *s != replayed => Err("stored summary differs from replay".into()),
        _ => Ok(()),
    }
}

/// Runs a parsed command, writing normal output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), String> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Curate(a) => cmd_curate(a, out),
        Command::Run(a) => cmd_run(a, out),
        Command::Report(a) => cmd_report(a, out),
        Command::Cost(a) => cmd_cost(a, out),
        Command::Serve(a) => cmd_serve(a, out),
        Command::Replay(a) => cmd_replay(a, out),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exec(args: &[&str]) -> Result<String, String> {
        let cli = Cli::try_parse_from(std::iter::once("configym").chain(args.iter().copied())).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        run(&cli, &mut buf)?;
        Ok(String::from_utf8(buf).unwrap())
    }

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_list("0,2").unwrap(), vec![0, 2]);
        assert!(parse_list("5..1").is_err());
    }

    #[test]
    fn gen_is_deterministic() {
        let d = tempfile::tempdir().unwrap();
        let (a, b) = (d.path().join("a"), d.path().join("b"));
        exec(&["gen", "--task", "pretrain", "--seed", "7", "--out", a.to_str().unwrap()]).unwrap();
        exec(&["gen", "--task", "pretrain", "--seed", "7", "--out", b.to_str().unwrap()]).unwrap();
        for f in ["pretrain_hp.json", "manifest.json"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        }
    }

    #[test]
    fn gen_names_bad_token() {
        let d = tempfile::tempdir().unwrap();
        let spec = d.path().join("spec.json");
        std::fs::write(&spec, r#"{"task": "pretrain", "lr_tokens": ["0.001953", "0.0015"]}"#).unwrap();
        let err = exec(&["gen", "--spec", spec.to_str().unwrap(), "--out", d.path().to_str().unwrap()]).unwrap_err();
        assert!(err.contains("0.0015"), "{err}");
    }

    #[test]
    fn cost_defaults_from_flags() {
        let out = exec(&["cost", "--k", "5", "--m", "4", "--e-m", "100", "--s-base", "3", "--s-meta", "1", "--t-hf", "50", "--t-lf", "1"]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["critical_k"], 5);
        assert_eq!(v["cost_effective"], true);
    }

    #[test]
    fn run_report_replay() {
        let d = tempfile::tempdir().unwrap();
        let b = d.path().join("b");
        exec(&["gen", "--task", "grpo", "--out", b.to_str().unwrap()]).unwrap();
        let logs = d.path().join("logs");
        let bundle = b.join("rl_grpo.json");
        let args = [
            "run", "--bundle", bundle.to_str().unwrap(), "--policy", "random,exhaustive", "--experiment", "gsm8k-768",
            "--budget", "1..5", "--seed", "0..2", "--out", logs.to_str().unwrap(), "--jobs", "3",
        ];
        assert_eq!(exec(&args).unwrap().trim(), "written 20 skipped 0 failed 0");
        assert_eq!(exec(&args).unwrap().trim(), "written 0 skipped 20 failed 0");
        let rep = exec(&["report", "--logs", logs.to_str().unwrap(), "--grouping", "method_budget"]).unwrap();
        assert_eq!(rep.lines().count(), 11);
        let first = std::fs::read_dir(&logs).unwrap().next().unwrap().unwrap().path();
        exec(&["replay", first.to_str().unwrap()]).unwrap();
    }
}
