//! Upfront-training cost amortization: when does paying once for
//! low-fidelity source runs beat paying per target task at high fidelity?
//!
//! The break-even boundary is decided in exact rational arithmetic; floats
//! appear only in the reported numbers.

use std::fmt::Write as _;

use num::{BigInt, BigRational, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("`{0}` must be finite and non-negative")]
    Negative(&'static str),
    #[error("low-fidelity evaluation cost must be positive")]
    ZeroLowFidelityCost,
    #[error("K range is empty")]
    EmptyRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModelParams {
    /// Number of target tasks.
    pub k: u64,
    /// Number of source tasks used for training.
    pub m: u64,
    /// Low-fidelity evaluations per source task.
    pub e_m: f64,
    /// High-fidelity evaluations the baseline needs per target task.
    pub s_base: f64,
    /// High-fidelity evaluations the trained model needs per target task.
    pub s_meta: f64,
    /// Cost of one high-fidelity evaluation.
    pub t_hf: f64,
    /// Cost of one low-fidelity evaluation.
    pub t_lf: f64,
}

struct Exact {
    k: BigRational,
    m: BigRational,
    e_m: BigRational,
    s_base: BigRational,
    s_meta: BigRational,
    t_hf: BigRational,
    t_lf: BigRational,
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

fn int(x: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

fn float(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

impl CostModelParams {
    pub fn validate(&self) -> Result<(), CostError> {
        for (name, v) in [
            ("e_m", self.e_m),
            ("s_base", self.s_base),
            ("s_meta", self.s_meta),
            ("t_hf", self.t_hf),
            ("t_lf", self.t_lf),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(CostError::Negative(name));
            }
        }
        if self.t_lf == 0.0 {
            return Err(CostError::ZeroLowFidelityCost);
        }
        Ok(())
    }

    fn exact(&self) -> Exact {
        Exact {
            k: int(self.k),
            m: int(self.m),
            e_m: exact(self.e_m),
            s_base: exact(self.s_base),
            s_meta: exact(self.s_meta),
            t_hf: exact(self.t_hf),
            t_lf: exact(self.t_lf),
        }
    }

    /// Cost ratio of one high-fidelity to one low-fidelity evaluation.
    pub fn alpha(&self) -> f64 {
        self.t_hf / self.t_lf
    }

    /// High-fidelity evaluations saved per target task.
    pub fn delta_s(&self) -> f64 {
        self.s_base - self.s_meta
    }
}

impl Exact {
    fn upfront(&self) -> BigRational {
        &self.m * &self.e_m * &self.t_lf
    }

    fn c_base(&self, k: &BigRational) -> BigRational {
        k * &self.s_base * &self.t_hf
    }

    fn c_meta(&self, k: &BigRational) -> BigRational {
        self.upfront() + k * &self.s_meta * &self.t_hf
    }

    fn saving_rate(&self) -> BigRational {
        (&self.s_base - &self.s_meta) * &self.t_hf / &self.t_lf
    }

    /// Real-valued K at which both costs are equal; `None` when the
    /// trained model never catches up.
    fn crossing(&self) -> Option<BigRational> {
        let rate = self.saving_rate();
        (rate > BigRational::zero()).then(|| &self.m * &self.e_m / rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub c_base: f64,
    pub c_meta: f64,
    pub cost_effective: bool,
    /// K / M; `None` when M = 0.
    pub leverage_ratio: Option<f64>,
    /// E_m / (ΔS·α): the leverage ratio above which training pays off.
    /// `None` means no finite threshold exists.
    pub threshold: Option<f64>,
    /// K at which both costs are equal, M·E_m / (ΔS·α).
    pub break_even_k: Option<f64>,
    /// Smallest integer K with C_meta < C_base; `None` means never.
    pub critical_k: Option<u64>,
    pub alpha: f64,
    pub delta_s: f64,
    pub flags: Vec<String>,
}

pub fn cost_report(params: &CostModelParams) -> Result<CostReport, CostError> {
    params.validate()?;
    let x = params.exact();
    let c_base = x.c_base(&x.k);
    let c_meta = x.c_meta(&x.k);
    let crossing = x.crossing();
    let critical_k = crossing.as_ref().map(|c| {
        (c.floor().to_integer() + 1u32)
            .to_u64()
            .unwrap_or(u64::MAX)
    });
    let mut flags = Vec::new();
    if params.s_meta > params.s_base {
        flags.push("s_meta exceeds s_base: the trained model needs more high-fidelity evaluations".into());
    }
    if params.delta_s() == 0.0 || params.t_hf == 0.0 {
        flags.push("no per-task saving: training never pays off".into());
    }
    let threshold = (x.saving_rate() > BigRational::zero()).then(|| float(&(&x.e_m / x.saving_rate())));
    Ok(CostReport {
        c_base: float(&c_base),
        c_meta: float(&c_meta),
        cost_effective: c_meta < c_base,
        leverage_ratio: (params.m > 0).then(|| params.k as f64 / params.m as f64),
        threshold,
        break_even_k: crossing.as_ref().map(float),
        critical_k,
        alpha: params.alpha(),
        delta_s: params.delta_s(),
        flags,
    })
}

/// Exact check of C_meta < C_base at the params' own K.
pub fn is_cost_effective(params: &CostModelParams) -> bool {
    let x = params.exact();
    x.c_meta(&x.k) < x.c_base(&x.k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCurves {
    pub k: Vec<u64>,
    /// K·S_base·t_HF.
    pub baseline: Vec<f64>,
    /// M·E_m·t_LF + K·S_meta·t_HF.
    pub meta: Vec<f64>,
    /// Real K where the two lines meet, if they do for K > 0.
    pub crossing: Option<f64>,
}

impl CostCurves {
    /// baseline / meta at each K (`None` where meta costs nothing).
    pub fn ratios(&self) -> Vec<Option<f64>> {
        self.baseline
            .iter()
            .zip(&self.meta)
            .map(|(b, m)| (*m > 0.0).then(|| b / m))
            .collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("k\tbaseline\tmeta\tratio\n");
        for ((k, (b, m)), r) in self.k.iter().zip(self.baseline.iter().zip(&self.meta)).zip(self.ratios()) {
            let r = r.map_or_else(|| "inf".to_string(), |r| format!("{r}"));
            writeln!(out, "{k}\t{b}\t{m}\t{r}").expect("string write");
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let series = [("baseline", &self.baseline, "#c0392b"), ("trained", &self.meta, "#2471a3")];
        let xs = || self.k.iter().map(|&k| k as f64);
        let points: Vec<(f64, f64)> = xs()
            .zip(self.baseline.iter().copied())
            .chain(xs().zip(self.meta.iter().copied()))
            .collect();
        let mut plot = crate::report::SvgPlot::new("target tasks K", "cumulative cost", &points);
        for (name, ys, color) in series {
            let xy: Vec<(f64, f64)> = xs().zip(ys.iter().copied()).collect();
            plot.line(name, &xy, color);
        }
        plot.finish()
    }
}

pub fn cumulative_cost_curves(params: &CostModelParams, ks: &[u64]) -> Result<CostCurves, CostError> {
    params.validate()?;
    if ks.is_empty() {
        return Err(CostError::EmptyRange);
    }
    let x = params.exact();
    let (mut baseline, mut meta) = (Vec::new(), Vec::new());
    for &k in ks {
        baseline.push(float(&x.c_base(&int(k))));
        meta.push(float(&x.c_meta(&int(k))));
    }
    Ok(CostCurves {
        k: ks.to_vec(),
        baseline,
        meta,
        crossing: x.crossing().filter(|c| *c > BigRational::zero()).as_ref().map(float),
    })
}

/// A labeled parameter set with a K range to plot, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostScenario {
    pub name: String,
    /// True when the numbers are placeholders rather than measurements.
    pub synthetic: bool,
    #[serde(default)]
    pub note: String,
    pub params: CostModelParams,
    pub k_range: [u64; 2],
}

impl CostScenario {
    pub fn ks(&self) -> Vec<u64> {
        (self.k_range[0]..=self.k_range[1]).collect()
    }
}
