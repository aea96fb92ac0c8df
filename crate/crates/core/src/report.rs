//! Aggregation of episode logs into per-group regret tables and plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{EpisodeLog, FinalSummary};
use crate::episode::TaskBounds;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("logs of task `{task}` experiment `{experiment}` disagree on metric bounds")]
    InconsistentBounds { task: String, experiment: String },
    #[error("unknown grouping `{0}`")]
    UnknownGrouping(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    #[default]
    MethodTaskBudget,
    MethodTaskExperimentBudget,
    MethodBudget,
}

impl FromStr for Grouping {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "method_task_budget" | "task" => Ok(Self::MethodTaskBudget),
            "method_task_experiment_budget" | "experiment" => Ok(Self::MethodTaskExperimentBudget),
            "method_budget" | "method" => Ok(Self::MethodBudget),
            other => Err(ReportError::UnknownGrouping(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub method: String,
    pub task: Option<String>,
    pub experiment: Option<String>,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(flatten)]
    pub key: GroupKey,
    pub episodes: usize,
    pub mean_regret: f64,
    /// Population standard deviation over the group's episodes.
    pub std_regret: f64,
    pub mean_reward: f64,
    pub exec_rate: f64,
    pub unique_rate: f64,
    pub matched_fraction: f64,
    pub aborted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub grouping: Grouping,
    pub rows: Vec<ReportRow>,
}

/// Order-independent mean: values are sorted before summation.
fn mean(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn population_std(values: &mut [f64]) -> f64 {
    let m = mean(values);
    let mut sq: Vec<f64> = values.iter().map(|x| (x - m).powi(2)).collect();
    mean(&mut sq).sqrt()
}

fn summary_of(log: &EpisodeLog) -> FinalSummary {
    log.summary.clone().unwrap_or_else(|| log.replay())
}

pub fn aggregate_report(logs: &[EpisodeLog], grouping: Grouping) -> Result<Report, ReportError> {
    let mut bounds: BTreeMap<(&str, &str), TaskBounds> = BTreeMap::new();
    for log in logs {
        let h = &log.header;
        let key = (h.task_id.as_str(), h.experiment_id.as_str());
        if let Some(prev) = bounds.insert(key, h.metric_bounds) {
            if prev != h.metric_bounds {
                return Err(ReportError::InconsistentBounds {
                    task: h.task_id.clone(),
                    experiment: h.experiment_id.clone(),
                });
            }
        }
    }

    let mut groups: BTreeMap<GroupKey, Vec<FinalSummary>> = BTreeMap::new();
    for log in logs {
        let h = &log.header;
        let key = GroupKey {
            method: h.method.clone(),
            task: (grouping != Grouping::MethodBudget).then(|| h.task_id.clone()),
            experiment: (grouping == Grouping::MethodTaskExperimentBudget).then(|| h.experiment_id.clone()),
            budget: h.budget,
        };
        groups.entry(key).or_default().push(summary_of(log));
    }

    let rows = groups
        .into_iter()
        .map(|(key, s)| {
            let col = |f: fn(&FinalSummary) -> f64| s.iter().map(f).collect::<Vec<_>>();
            ReportRow {
                key,
                episodes: s.len(),
                mean_regret: mean(&mut col(|x| x.regret)),
                std_regret: population_std(&mut col(|x| x.regret)),
                mean_reward: mean(&mut col(|x| x.reward)),
                exec_rate: mean(&mut col(|x| x.exec_rate)),
                unique_rate: mean(&mut col(|x| x.unique_rate)),
                matched_fraction: mean(&mut col(|x| x.matched_fraction)),
                aborted: s.iter().filter(|x| x.aborted).count(),
            }
        })
        .collect();
    Ok(Report { grouping, rows })
}

impl Report {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "method\ttask\texperiment\tbudget\tepisodes\tmean_regret\tstd_regret\tmean_reward\texec_rate\tunique_rate\tmatched_fraction\taborted\n",
        );
        for r in &self.rows {
            let k = &r.key;
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                k.method,
                k.task.as_deref().unwrap_or("*"),
                k.experiment.as_deref().unwrap_or("*"),
                k.budget,
                r.episodes,
                r.mean_regret,
                r.std_regret,
                r.mean_reward,
                r.exec_rate,
                r.unique_rate,
                r.matched_fraction,
                r.aborted
            )
            .expect("string write");
        }
        out
    }

    /// Mean regret against budget, one line per method and group.
    pub fn to_svg(&self) -> String {
        let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for r in &self.rows {
            let k = &r.key;
            let mut name = k.method.clone();
            for part in [&k.task, &k.experiment].into_iter().flatten() {
                name.push('/');
                name.push_str(part);
            }
            series.entry(name).or_default().push((k.budget as f64, r.mean_regret));
        }
        let all: Vec<(f64, f64)> = series.values().flatten().copied().chain([(1.0, 0.0)]).collect();
        let mut plot = SvgPlot::new("budget", "mean regret", &all);
        for (i, (name, pts)) in series.iter().enumerate() {
            plot.line(name, pts, PALETTE[i % PALETTE.len()]);
        }
        plot.finish()
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Minimal deterministic line-chart writer.
pub struct SvgPlot {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
    legend: usize,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;

impl SvgPlot {
    pub fn new(x_label: &str, y_label: &str, points: &[(f64, f64)]) -> Self {
        let range = |f: fn(&(f64, f64)) -> f64| {
            let lo = points.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            match (lo.is_finite(), hi > lo) {
                (true, true) => (lo, hi),
                (true, false) => (lo - 0.5, lo + 0.5),
                _ => (0.0, 1.0),
            }
        };
        let (x, y) = (range(|p| p.0), range(|p| p.1));
        let mut body = String::new();
        write!(
            body,
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">
<rect width="{W}" height="{H}" fill="white"/>
<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>
<text x="{cx}" y="{lx}" text-anchor="middle">{x_label}</text>
<text x="14" y="{cy}" text-anchor="middle" transform="rotate(-90 14 {cy})">{y_label}</text>
<text x="{PAD}" y="{tx}" text-anchor="middle">{x0:.3}</text>
<text x="{r}" y="{tx}" text-anchor="middle">{x1:.3}</text>
<text x="{ty}" y="{b}" text-anchor="end">{y0:.3}</text>
<text x="{ty}" y="{ly}" text-anchor="end">{y1:.3}</text>
"##,
            b = H - PAD,
            r = W - PAD,
            cx = W / 2.0,
            cy = H / 2.0,
            lx = H - 15.0,
            tx = H - PAD + 15.0,
            ty = PAD - 5.0,
            ly = PAD + 4.0,
            x0 = x.0,
            x1 = x.1,
            y0 = y.0,
            y1 = y.1,
        )
        .expect("string write");
        Self { body, x, y, legend: 0 }
    }

    fn project(&self, (px, py): (f64, f64)) -> (f64, f64) {
        let sx = PAD + (px - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * PAD);
        let sy = H - PAD - (py - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * PAD);
        (sx, sy)
    }

    pub fn line(&mut self, name: &str, points: &[(f64, f64)], color: &str) {
        let path: Vec<String> = points
            .iter()
            .map(|&p| {
                let (x, y) = self.project(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let ly = PAD + 14.0 * self.legend as f64;
        writeln!(
            self.body,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>
<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            path.join(" "),
            W - PAD - 150.0,
            escape(name)
        )
        .expect("string write");
        self.legend += 1;
    }

    pub fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
