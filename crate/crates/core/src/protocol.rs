//! Line-delimited JSON protocol between the gym and an agent, with
//! scripted, subprocess and policy-backed agents.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::Policy;
use crate::curation::{render_context, top_k, CurationSample, RenderOptions};
use crate::episode::{
    init_episode, EpisodeError, EpisodeLog, EpisodeOptions, EpisodeState, FinalSummary, Session,
    TrajectoryRecord, TurnStatus,
};
use crate::lookup::{ExperimentTable, TaskBundle};
use crate::model::{Configuration, ConfigSpace, Value};
use crate::proposal::render_proposal;

pub const DEFAULT_TURN_TIMEOUT: Duration = Duration::from_secs(300);
/// Protocol violations tolerated before the episode is aborted.
pub const MAX_STRIKES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum MessageBody {
    Prompt {
        text: String,
        budget: usize,
    },
    ExecConfig {
        config: String,
    },
    Observation {
        score: Option<f64>,
        details: BTreeMap<String, String>,
        matched_flag: bool,
        remaining: usize,
        status: TurnStatus,
    },
    EpisodeEnd {
        reward: f64,
        regret: f64,
        exec_rate: f64,
        unique_rate: f64,
        aborted: bool,
    },
    Error {
        message: String,
        strikes: usize,
    },
}

/// One line on the wire: `{"type", "episode_id", "payload"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMessage {
    pub episode_id: String,
    #[serde(flatten)]
    pub body: MessageBody,
}

impl ProtocolMessage {
    pub fn new(episode_id: impl Into<String>, body: MessageBody) -> Self {
        Self {
            episode_id: episode_id.into(),
            body,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("messages serialize")
    }

    pub fn exec_config(episode_id: impl Into<String>, config: impl Into<String>) -> Self {
        Self::new(
            episode_id,
            MessageBody::ExecConfig {
                config: config.into(),
            },
        )
    }
}

/// Text between `<config>` and `</config>` when present, else the whole
/// payload.
pub fn extract_config(payload: &str) -> &str {
    let Some(start) = payload.find("<config>") else {
        return payload.trim();
    };
    let rest = &payload[start + "<config>".len()..];
    match rest.find("</config>") {
        Some(end) => rest[..end].trim(),
        None => rest.trim(),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("agent-timeout after {0:?}")]
    Timeout(Duration),
    #[error("agent disconnected: {0}")]
    Disconnected(String),
}

/// Anything that can hold one side of the conversation.
pub trait AgentEndpoint: Send {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), AgentError>;
    /// Next raw line from the agent.
    fn receive(&mut self, timeout: Duration) -> Result<String, AgentError>;
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub episode_id: String,
    pub episode: EpisodeOptions,
    pub render: RenderOptions,
    pub turn_timeout: Duration,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            episode_id: "episode".into(),
            episode: EpisodeOptions::default(),
            render: RenderOptions::default(),
            turn_timeout: DEFAULT_TURN_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentRun {
    pub trajectory: TrajectoryRecord,
    pub summary: FinalSummary,
    pub log: EpisodeLog,
    /// Every message in wire order, both directions.
    pub transcript: Vec<ProtocolMessage>,
    pub strikes: usize,
}

/// Drives one episode: prompt, then `(exec_config, observation)` per turn,
/// then `episode_end`. Violations answer with an error and do not consume
/// a turn; the third one, a timeout, or a disconnect aborts with reward -1.
pub fn run_episode_with_agent(
    agent: &mut dyn AgentEndpoint,
    sample: &CurationSample,
    bundle: &TaskBundle,
    opts: &RunOptions,
) -> Result<AgentRun, ProtocolError> {
    let table = bundle
        .experiment(&sample.target)
        .ok_or_else(|| ProtocolError::UnknownExperiment(sample.target.clone()))?;
    let id = opts.episode_id.clone();
    let mut session = Session::start(bundle, &sample.target, sample.budget, &id, opts.episode.clone())?;
    let mut transcript = Vec::new();
    let mut strikes = 0;

    let prompt = ProtocolMessage::new(
        &id,
        MessageBody::Prompt {
            text: render_context(sample, bundle, opts.render),
            budget: sample.budget,
        },
    );
    let mut abort: Option<String> = agent.send(&prompt).err().map(|e| e.to_string());
    transcript.push(prompt);

    while abort.is_none() && !session.is_finished() {
        let line = match agent.receive(opts.turn_timeout) {
            Ok(l) => l,
            Err(AgentError::Timeout(_)) => {
                abort = Some("agent-timeout".into());
                break;
            }
            Err(e) => {
                abort = Some(e.to_string());
                break;
            }
        };
        let parsed: Result<ProtocolMessage, String> =
            serde_json::from_str(&line).map_err(|e| format!("unreadable message: {e}"));
        let violation = match parsed {
            Ok(msg) => match &msg.body {
                MessageBody::ExecConfig { config } => {
                    let raw = extract_config(config).to_string();
                    transcript.push(msg);
                    let obs = session.step(table, &raw)?;
                    let reply = ProtocolMessage::new(
                        &id,
                        MessageBody::Observation {
                            score: obs.score,
                            details: obs.details,
                            matched_flag: obs.matched_flag,
                            remaining: obs.remaining,
                            status: obs.status,
                        },
                    );
                    if let Err(e) = agent.send(&reply) {
                        abort = Some(e.to_string());
                    }
                    transcript.push(reply);
                    None
                }
                _ => Some("expected an exec_config message".to_string()),
            },
            Err(e) => Some(e),
        };
        if let Some(message) = violation {
            strikes += 1;
            let err = ProtocolMessage::new(&id, MessageBody::Error { message, strikes });
            let _ = agent.send(&err);
            transcript.push(err);
            if strikes >= MAX_STRIKES {
                abort = Some("protocol-violation".into());
            }
        }
    }

    let summary = match abort {
        Some(reason) => session.abort(reason),
        None => session.finish(),
    };
    let end = ProtocolMessage::new(
        &id,
        MessageBody::EpisodeEnd {
            reward: summary.reward,
            regret: summary.regret,
            exec_rate: summary.exec_rate,
            unique_rate: summary.unique_rate,
            aborted: summary.aborted,
        },
    );
    let _ = agent.send(&end);
    transcript.push(end);
    Ok(AgentRun {
        trajectory: session.trajectory(),
        summary,
        log: session.log().clone(),
        transcript,
        strikes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    /// Last closing bracket becomes `)`.
    BracketSwap,
    /// A list element (or, for scalar-only configs, a whole entry) repeats.
    Duplication,
    /// The text is cut short.
    Truncation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptedAgentSpec {
    /// Proposes records from the best down.
    OptimalReplay,
    /// Proposes records from the best down, corrupting the text with
    /// probability `p` per turn, so format is its only defect.
    NoisyFormat { p: f64, seed: u64 },
    /// Replays the given proposal texts.
    FixedSequence { sequence: Vec<String> },
}

fn corrupt(config: &Configuration, space: &ConfigSpace, kind: Corruption, rng: &mut ChaCha8Rng) -> String {
    let text = render_proposal(config, space);
    match kind {
        Corruption::BracketSwap => {
            let pos = text.rfind(['}', ']']).expect("rendered configs close a bracket");
            format!("{})", &text[..pos])
        }
        Corruption::Duplication => {
            let list_dim = space
                .dimensions()
                .iter()
                .find(|d| matches!(config.get(&d.name), Some(Value::List(l)) if !l.is_empty()));
            match list_dim {
                Some(d) => {
                    let Some(Value::List(items)) = config.get(&d.name) else {
                        unreachable!()
                    };
                    let mut longer = items.clone();
                    let i = rng.random_range(0..longer.len());
                    longer.insert(i, longer[i].clone());
                    let mut c = config.clone();
                    c.set_list(&d.name, &longer);
                    render_proposal(&c, space)
                }
                None => {
                    let body = &text[1..text.len() - 1];
                    let entries: Vec<&str> = body.split(", '").collect();
                    let i = rng.random_range(0..entries.len());
                    let dup = if i == 0 {
                        entries[0].to_string()
                    } else {
                        format!("'{}", entries[i])
                    };
                    format!("{{{body}, {dup}}}")
                }
            }
        }
        Corruption::Truncation => {
            let chars: Vec<char> = text.chars().collect();
            let n = chars.len();
            let cut = rng.random_range(n / 2..n);
            chars[..cut].iter().collect()
        }
    }
}

/// Deterministic test double speaking the protocol.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    proposals: VecDeque<String>,
    corruptions: Vec<Option<Corruption>>,
    episode_id: String,
    open_turn: bool,
    ended: bool,
}

impl ScriptedAgent {
    pub fn new(spec: &ScriptedAgentSpec, table: &ExperimentTable) -> Self {
        let space = &table.space;
        let (proposals, corruptions) = match spec {
            ScriptedAgentSpec::OptimalReplay => (
                top_k(table, table.len())
                    .into_iter()
                    .map(|r| render_proposal(&r.config, space))
                    .collect(),
                vec![None; table.len()],
            ),
            ScriptedAgentSpec::NoisyFormat { p, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let order: Vec<&Configuration> = top_k(table, table.len()).into_iter().map(|r| &r.config).collect();
                let mut out = VecDeque::new();
                let mut kinds = Vec::new();
                for c in order {
                    if rng.random_bool(p.clamp(0.0, 1.0)) {
                        let kind = [Corruption::BracketSwap, Corruption::Duplication, Corruption::Truncation]
                            [rng.random_range(0..3)];
                        out.push_back(corrupt(c, space, kind, &mut rng));
                        kinds.push(Some(kind));
                    } else {
                        out.push_back(render_proposal(c, space));
                        kinds.push(None);
                    }
                }
                (out, kinds)
            }
            ScriptedAgentSpec::FixedSequence { sequence } => {
                (sequence.iter().cloned().collect(), vec![None; sequence.len()])
            }
        };
        Self {
            proposals,
            corruptions,
            episode_id: String::new(),
            open_turn: false,
            ended: false,
        }
    }

    /// Corruption applied to each planned proposal, in order.
    pub fn corruptions(&self) -> &[Option<Corruption>] {
        &self.corruptions
    }
}

impl AgentEndpoint for ScriptedAgent {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), AgentError> {
        self.episode_id = msg.episode_id.clone();
        match msg.body {
            MessageBody::Prompt { .. } | MessageBody::Error { .. } => self.open_turn = true,
            MessageBody::Observation { remaining, .. } => self.open_turn = remaining > 0,
            MessageBody::EpisodeEnd { .. } => self.ended = true,
            MessageBody::ExecConfig { .. } => {}
        }
        Ok(())
    }

    fn receive(&mut self, _timeout: Duration) -> Result<String, AgentError> {
        if self.ended || !self.open_turn {
            return Err(AgentError::Disconnected("no turn is open".into()));
        }
        let next = self
            .proposals
            .pop_front()
            .ok_or_else(|| AgentError::Disconnected("script exhausted".into()))?;
        self.open_turn = false;
        Ok(ProtocolMessage::exec_config(&self.episode_id, format!("<config>{next}</config>")).to_line())
    }
}

/// A built-in policy behind the agent interface. It mirrors the episode
/// locally so the policy sees the same history as the gym.
pub struct PolicyAgent {
    policy: Box<dyn Policy>,
    table: ExperimentTable,
    mirror: EpisodeState,
    episode_id: String,
    open_turn: bool,
}

impl PolicyAgent {
    pub fn new(
        policy: Box<dyn Policy>,
        bundle: &TaskBundle,
        sample: &CurationSample,
        matching: bool,
    ) -> Result<Self, ProtocolError> {
        let table = bundle
            .experiment(&sample.target)
            .ok_or_else(|| ProtocolError::UnknownExperiment(sample.target.clone()))?
            .clone();
        Ok(Self {
            policy,
            table,
            mirror: init_episode(bundle, &sample.target, sample.budget)?.with_matching(matching),
            episode_id: String::new(),
            open_turn: false,
        })
    }
}

impl AgentEndpoint for PolicyAgent {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), AgentError> {
        self.episode_id = msg.episode_id.clone();
        match msg.body {
            MessageBody::Prompt { .. } | MessageBody::Error { .. } => self.open_turn = true,
            MessageBody::Observation { remaining, .. } => self.open_turn = remaining > 0,
            _ => self.open_turn = false,
        }
        Ok(())
    }

    fn receive(&mut self, _timeout: Duration) -> Result<String, AgentError> {
        if !self.open_turn {
            return Err(AgentError::Disconnected("no turn is open".into()));
        }
        let config = self
            .policy
            .propose(&self.mirror, &self.table)
            .map_err(|e| AgentError::Disconnected(e.to_string()))?;
        let text = render_proposal(&config, &self.table.space);
        self.mirror
            .step(&self.table, &text)
            .map_err(|e| AgentError::Disconnected(e.to_string()))?;
        self.open_turn = false;
        Ok(ProtocolMessage::exec_config(&self.episode_id, format!("<config>{text}</config>")).to_line())
    }
}

/// An external process speaking the protocol on stdin/stdout.
pub struct SubprocessAgent {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl SubprocessAgent {
    /// Runs `command` through the shell.
    pub fn spawn(command: &str) -> std::io::Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
        })
    }
}

impl AgentEndpoint for SubprocessAgent {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<(), AgentError> {
        writeln!(self.stdin, "{}", msg.to_line())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| AgentError::Disconnected(e.to_string()))
    }

    fn receive(&mut self, timeout: Duration) -> Result<String, AgentError> {
        match self.lines.recv_timeout(timeout) {
            Ok(line) => Ok(line),
            Err(RecvTimeoutError::Timeout) => Err(AgentError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(AgentError::Disconnected("stdout closed".into())),
        }
    }
}

impl Drop for SubprocessAgent {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::baselines::ExhaustivePolicy;
    use crate::curation::Role;
    use crate::episode::RewardMode;
    use crate::lookup::tests::grpo_table;
    use crate::model::Direction;

    fn bundle() -> TaskBundle {
        let scores: Vec<f64> = (0..18).map(|i| ((i * 5) % 18) as f64 / 17.0).collect();
        TaskBundle::new("grpo", "", Direction::Maximize, vec![], vec![grpo_table(&scores)]).unwrap()
    }

    fn sample(budget: usize) -> CurationSample {
        CurationSample {
            role: Role::Test,
            target: "gsm8k-768".into(),
            budget,
            k: 3,
            demos: vec![],
        }
    }

    #[test]
    fn extraction() {
        assert_eq!(extract_config("think... <config>{'a': 1}</config> done"), "{'a': 1}");
        assert_eq!(extract_config("  {'a': 1} "), "{'a': 1}");
        assert_eq!(extract_config("<config>{'a': 1}"), "{'a': 1}");
    }

    #[test]
    fn message_wire_shape() {
        let m = ProtocolMessage::exec_config("e1", "{'lr': 1e-06}");
        let v: serde_json::Value = serde_json::from_str(&m.to_line()).unwrap();
        assert_eq!(v["type"], "exec_config");
        assert_eq!(v["episode_id"], "e1");
        assert_eq!(v["payload"]["config"], "{'lr': 1e-06}");
        assert_eq!(serde_json::from_value::<ProtocolMessage>(v).unwrap(), m);
    }

    #[test]
    fn optimal_replay_scores_zero_at_budget_one() {
        let b = bundle();
        let mut agent = ScriptedAgent::new(&ScriptedAgentSpec::OptimalReplay, &b.experiments[0]);
        let run = run_episode_with_agent(&mut agent, &sample(1), &b, &RunOptions::default()).unwrap();
        assert_eq!((run.summary.reward, run.summary.regret), (0.0, 0.0));
    }

    #[test]
    fn message_order_and_count() {
        let b = bundle();
        let mut agent = ScriptedAgent::new(&ScriptedAgentSpec::OptimalReplay, &b.experiments[0]);
        let run = run_episode_with_agent(&mut agent, &sample(4), &b, &RunOptions::default()).unwrap();
        let kinds: Vec<&str> = run
            .transcript
            .iter()
            .map(|m| match m.body {
                MessageBody::Prompt { .. } => "p",
                MessageBody::ExecConfig { .. } => "x",
                MessageBody::Observation { .. } => "o",
                MessageBody::EpisodeEnd { .. } => "e",
                MessageBody::Error { .. } => "!",
            })
            .collect();
        assert_eq!(kinds.concat(), "pxoxoxoxoe");
        assert_eq!(run.summary.regret, 0.0);
    }

    struct Rude {
        script: VecDeque<String>,
    }

    impl AgentEndpoint for Rude {
        fn send(&mut self, _msg: &ProtocolMessage) -> Result<(), AgentError> {
            Ok(())
        }
        fn receive(&mut self, t: Duration) -> Result<String, AgentError> {
            self.script.pop_front().ok_or(AgentError::Timeout(t))
        }
    }

    #[test]
    fn violations_do_not_consume_budget() {
        let b = bundle();
        let key = b.experiments[0].records()[0].key.clone();
        let mut agent = Rude {
            script: VecDeque::from(vec![
                "not json".to_string(),
                ProtocolMessage::new("e", MessageBody::Prompt { text: "hi".into(), budget: 1 }).to_line(),
                ProtocolMessage::exec_config("e", key).to_line(),
            ]),
        };
        let run = run_episode_with_agent(&mut agent, &sample(1), &b, &RunOptions::default()).unwrap();
        assert_eq!(run.strikes, 2);
        assert!(!run.summary.aborted);
        assert_eq!(run.log.turns.len(), 1);
    }

    #[test]
    fn three_strikes_abort() {
        let b = bundle();
        let mut agent = Rude {
            script: VecDeque::from(vec!["x".to_string(), "y".into(), "z".into()]),
        };
        let run = run_episode_with_agent(&mut agent, &sample(2), &b, &RunOptions::default()).unwrap();
        assert!(run.summary.aborted);
        assert_eq!(run.summary.reward, -1.0);
        assert_eq!(run.summary.abort_reason.as_deref(), Some("protocol-violation"));
        assert!(run.log.turns.is_empty());
    }

    #[test]
    fn timeout_aborts() {
        let b = bundle();
        let mut agent = Rude { script: VecDeque::new() };
        let run = run_episode_with_agent(&mut agent, &sample(2), &b, &RunOptions::default()).unwrap();
        assert_eq!(run.summary.abort_reason.as_deref(), Some("agent-timeout"));
        assert_eq!(run.summary.regret, 1.0);
    }

    fn noisy_rate(p: f64, matching: bool, mode: RewardMode) -> (f64, f64) {
        let b = bundle();
        let mut exec = 0.0;
        let mut collapsed = 0;
        let n = 200;
        for seed in 0..n {
            let mut agent = ScriptedAgent::new(&ScriptedAgentSpec::NoisyFormat { p, seed }, &b.experiments[0]);
            let mut opts = RunOptions::default();
            opts.episode.matching = matching;
            opts.episode.reward_mode = mode;
            let run = run_episode_with_agent(&mut agent, &sample(3), &b, &opts).unwrap();
            exec += run.summary.exec_rate;
            collapsed += usize::from(run.summary.reward == -1.0);
        }
        (exec / n as f64, collapsed as f64 / n as f64)
    }

    #[test]
    fn noisy_degenerate_rates() {
        assert_eq!(noisy_rate(0.0, true, RewardMode::Strict), (1.0, 0.0));
        assert_eq!(noisy_rate(1.0, false, RewardMode::Strict), (0.0, 1.0));
    }

    #[test]
    fn corruption_census_covers_taxonomy() {
        let b = bundle();
        let mut census: HashMap<Corruption, usize> = HashMap::new();
        let mut turns = 0;
        for seed in 0..600 {
            let agent = ScriptedAgent::new(&ScriptedAgentSpec::NoisyFormat { p: 0.5, seed }, &b.experiments[0]);
            for c in agent.corruptions().iter().flatten() {
                *census.entry(*c).or_default() += 1;
            }
            turns += agent.corruptions().len();
        }
        assert!(turns >= 10_000);
        assert_eq!(census.len(), 3);
        assert!(census.values().all(|&n| n > 1000), "{census:?}");
    }

    #[test]
    fn corrupted_text_never_executes_without_matching() {
        let t = grpo_table(&[0.0; 18]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for r in t.records() {
            for kind in [Corruption::BracketSwap, Corruption::Duplication, Corruption::Truncation] {
                for _ in 0..5 {
                    let text = corrupt(&r.config, &t.space, kind, &mut rng);
                    let b = TaskBundle::new("x", "", Direction::Maximize, vec![], vec![t.clone()]).unwrap();
                    let mut s = init_episode(&b, "gsm8k-768", 1).unwrap().with_matching(false);
                    let obs = s.step(&t, &text).unwrap();
                    assert_eq!(obs.status, TurnStatus::Invalid, "{kind:?}: {text}");
                }
            }
        }
    }

    #[test]
    fn policy_agent_matches_direct_drive() {
        let b = bundle();
        let mut agent = PolicyAgent::new(Box::new(ExhaustivePolicy), &b, &sample(3), true).unwrap();
        let run = run_episode_with_agent(&mut agent, &sample(3), &b, &RunOptions::default()).unwrap();
        let mut s = Session::start(&b, "gsm8k-768", 3, "episode", EpisodeOptions::default()).unwrap();
        let direct = crate::baselines::drive(&mut ExhaustivePolicy, &mut s, &b.experiments[0]).unwrap();
        assert_eq!(run.summary, direct);
        assert_eq!(run.log.to_jsonl(), s.log().to_jsonl());
    }

    #[test]
    fn subprocess_agent_round_trip() {
        let b = bundle();
        let key = b.experiments[0].records()[3].key.clone();
        let line = ProtocolMessage::exec_config("episode", format!("<config>{key}</config>")).to_line();
        let script = format!("read p; echo '{line}'; read o; read e");
        let mut agent = SubprocessAgent::spawn(&script).unwrap();
        let run = run_episode_with_agent(&mut agent, &sample(1), &b, &RunOptions::default()).unwrap();
        assert!(!run.summary.aborted);
        assert_eq!(run.log.turns[0].canonical.as_deref(), Some(key.as_str()));
    }
}
