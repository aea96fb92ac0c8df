//! Configuration spaces, configurations and outcomes.
//!
//! Every value in a configuration is an exact token (`"1e-05"`, `"64"`, `"True"`);
//! nothing is parsed into a float, so joins between bundle files and agent
//! output are bit-stable.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Characters that can never appear inside a token or a dimension name.
const RESERVED: &[char] = &[';', '=', ',', '[', ']', '{', '}', '(', ')', '\'', '"'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    pub fn utility(self, score: f64) -> Utility {
        match self {
            Direction::Maximize => Utility(score),
            Direction::Minimize => Utility(-score),
        }
    }

    /// Inverse of [`Direction::utility`].
    pub fn score(self, utility: Utility) -> f64 {
        match self {
            Direction::Maximize => utility.0,
            Direction::Minimize => -utility.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        }
    }
}

/// Direction-free performance: larger is always better.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Utility(pub f64);

impl Utility {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn total_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub score: f64,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, String>,
}

impl Outcome {
    pub fn new(score: f64, direction: Direction) -> Self {
        Self {
            score,
            direction,
            details: BTreeMap::new(),
        }
    }

    pub fn utility(&self) -> Utility {
        self.direction.utility(self.score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityLevel {
    Low,
    Medium,
    High,
}

impl FidelityLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            FidelityLevel::Low => "low",
            FidelityLevel::Medium => "medium",
            FidelityLevel::High => "high",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FidelityTag {
    pub metadata: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<FidelityLevel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimensionKind {
    ScalarChoice,
    PerLayerList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub kind: DimensionKind,
    pub allowed: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_count_source: Option<String>,
}

impl Dimension {
    pub fn scalar<S: Into<String>>(name: S, allowed: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: DimensionKind::ScalarChoice,
            allowed: allowed.iter().map(|t| t.to_string()).collect(),
            layer_count_source: None,
        }
    }

    pub fn per_layer<S: Into<String>>(name: S, allowed: &[&str], source: &str) -> Self {
        Self {
            name: name.into(),
            kind: DimensionKind::PerLayerList,
            allowed: allowed.iter().map(|t| t.to_string()).collect(),
            layer_count_source: Some(source.to_string()),
        }
    }

    pub fn allows(&self, token: &str) -> bool {
        self.allowed.iter().any(|t| t == token)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    FactoredGrid,
    ExplicitList,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error("space has no dimensions")]
    Empty,
    #[error("duplicate dimension name `{0}`")]
    DuplicateDimension(String),
    #[error("dimension `{0}` has no allowed tokens")]
    NoAllowedTokens(String),
    #[error("dimension `{dim}` lists token `{token}` twice")]
    DuplicateToken { dim: String, token: String },
    #[error("dimension `{dim}` has malformed token `{token}`")]
    MalformedToken { dim: String, token: String },
    #[error("invalid dimension name `{0}`")]
    MalformedName(String),
    #[error("per-layer dimension `{dim}` has bad layer-count source: {reason}")]
    BadLayerSource { dim: String, reason: String },
    #[error("scalar dimension `{0}` must not name a layer-count source")]
    UnexpectedLayerSource(String),
    #[error("explicit candidate #{index} is invalid: {reason}")]
    BadCandidate { index: usize, reason: String },
    #[error("explicit-list space has no candidates")]
    NoCandidates,
    #[error("factored-grid space must not carry explicit candidates")]
    UnexpectedCandidates,
}

/// The finite search space of one experiment.
#[derive(Debug, Clone)]
pub struct ConfigSpace {
    dimensions: Vec<Dimension>,
    mode: CandidateMode,
    candidates: Vec<Configuration>,
    candidate_keys: HashSet<String>,
}

impl PartialEq for ConfigSpace {
    fn eq(&self, other: &Self) -> bool {
        self.dimensions == other.dimensions
            && self.mode == other.mode
            && self.candidates == other.candidates
    }
}

fn valid_token(tok: &str) -> bool {
    !tok.is_empty()
        && !tok.chars().any(|c| c.is_whitespace() || RESERVED.contains(&c))
}

impl ConfigSpace {
    pub fn grid(dimensions: Vec<Dimension>) -> Result<Self, SpaceError> {
        Self::new(dimensions, CandidateMode::FactoredGrid, Vec::new())
    }

    pub fn explicit(
        dimensions: Vec<Dimension>,
        candidates: Vec<Configuration>,
    ) -> Result<Self, SpaceError> {
        Self::new(dimensions, CandidateMode::ExplicitList, candidates)
    }

    pub fn new(
        dimensions: Vec<Dimension>,
        mode: CandidateMode,
        candidates: Vec<Configuration>,
    ) -> Result<Self, SpaceError> {
        if dimensions.is_empty() {
            return Err(SpaceError::Empty);
        }
        let mut names = HashSet::new();
        for dim in &dimensions {
            if !valid_token(&dim.name) {
                return Err(SpaceError::MalformedName(dim.name.clone()));
            }
            if !names.insert(dim.name.as_str()) {
                return Err(SpaceError::DuplicateDimension(dim.name.clone()));
            }
            if dim.allowed.is_empty() {
                return Err(SpaceError::NoAllowedTokens(dim.name.clone()));
            }
            let mut seen = HashSet::new();
            for tok in &dim.allowed {
                if !valid_token(tok) {
                    return Err(SpaceError::MalformedToken {
                        dim: dim.name.clone(),
                        token: tok.clone(),
                    });
                }
                if !seen.insert(tok.as_str()) {
                    return Err(SpaceError::DuplicateToken {
                        dim: dim.name.clone(),
                        token: tok.clone(),
                    });
                }
            }
        }
        for dim in &dimensions {
            match (dim.kind, &dim.layer_count_source) {
                (DimensionKind::ScalarChoice, Some(_)) => {
                    return Err(SpaceError::UnexpectedLayerSource(dim.name.clone()))
                }
                (DimensionKind::ScalarChoice, None) => {}
                (DimensionKind::PerLayerList, None) => {
                    return Err(SpaceError::BadLayerSource {
                        dim: dim.name.clone(),
                        reason: "missing".into(),
                    })
                }
                (DimensionKind::PerLayerList, Some(src)) => {
                    let source = dimensions.iter().find(|d| &d.name == src).ok_or_else(|| {
                        SpaceError::BadLayerSource {
                            dim: dim.name.clone(),
                            reason: format!("no dimension named `{src}`"),
                        }
                    })?;
                    if source.kind != DimensionKind::ScalarChoice {
                        return Err(SpaceError::BadLayerSource {
                            dim: dim.name.clone(),
                            reason: format!("`{src}` is not a scalar dimension"),
                        });
                    }
                    if let Some(bad) = source
                        .allowed
                        .iter()
                        .find(|t| t.parse::<usize>().map_or(true, |n| n == 0))
                    {
                        return Err(SpaceError::BadLayerSource {
                            dim: dim.name.clone(),
                            reason: format!("`{src}` token `{bad}` is not a positive integer"),
                        });
                    }
                }
            }
        }

        let mut space = Self {
            dimensions,
            mode,
            candidates: Vec::new(),
            candidate_keys: HashSet::new(),
        };
        match mode {
            CandidateMode::FactoredGrid if !candidates.is_empty() => {
                return Err(SpaceError::UnexpectedCandidates)
            }
            CandidateMode::FactoredGrid => {}
            CandidateMode::ExplicitList => {
                if candidates.is_empty() {
                    return Err(SpaceError::NoCandidates);
                }
                for (index, cand) in candidates.iter().enumerate() {
                    // Explicit candidates are authoritative on list lengths.
                    let bad = space
                        .structural_diagnostics(cand)
                        .into_iter()
                        .find(|d| !matches!(d, Diagnostic::LengthMismatch { .. }));
                    if let Some(diag) = bad {
                        return Err(SpaceError::BadCandidate {
                            index,
                            reason: diag.to_string(),
                        });
                    }
                }
                space.candidate_keys = candidates
                    .iter()
                    .map(|c| canonicalize(c, &space))
                    .collect();
                space.candidates = candidates;
            }
        }
        Ok(space)
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    pub fn mode(&self) -> CandidateMode {
        self.mode
    }

    pub fn candidates(&self) -> &[Configuration] {
        &self.candidates
    }

    pub fn is_candidate(&self, canonical: &str) -> bool {
        self.candidate_keys.contains(canonical)
    }

    /// Number of points in the space, `None` if it overflows `u128`.
    pub fn cardinality(&self) -> Option<u128> {
        if self.mode == CandidateMode::ExplicitList {
            return Some(self.candidates.len() as u128);
        }
        // Scalars that no list depends on multiply directly; each layer-count
        // source sums over its tokens of the product of dependent lists.
        let mut total: u128 = 1;
        for dim in &self.dimensions {
            if dim.kind != DimensionKind::ScalarChoice {
                continue;
            }
            let dependents: Vec<&Dimension> = self
                .dimensions
                .iter()
                .filter(|d| d.layer_count_source.as_deref() == Some(dim.name.as_str()))
                .collect();
            let factor = if dependents.is_empty() {
                dim.allowed.len() as u128
            } else {
                let mut sum: u128 = 0;
                for tok in &dim.allowed {
                    let n: u32 = tok.parse().ok()?;
                    let mut prod: u128 = 1;
                    for dep in &dependents {
                        prod = prod.checked_mul((dep.allowed.len() as u128).checked_pow(n)?)?;
                    }
                    sum = sum.checked_add(prod)?;
                }
                sum
            };
            total = total.checked_mul(factor)?;
        }
        Some(total)
    }

    /// Enumerates every point of a factored grid made of scalar dimensions,
    /// in lexicographic order of allowed-token indices.
    pub fn enumerate_grid(&self) -> Option<Vec<Configuration>> {
        if self.mode != CandidateMode::FactoredGrid
            || self
                .dimensions
                .iter()
                .any(|d| d.kind != DimensionKind::ScalarChoice)
        {
            return None;
        }
        let mut out = vec![Configuration::new()];
        for dim in &self.dimensions {
            let mut next = Vec::with_capacity(out.len() * dim.allowed.len());
            for partial in &out {
                for tok in &dim.allowed {
                    let mut c = partial.clone();
                    c.set_token(&dim.name, tok);
                    next.push(c);
                }
            }
            out = next;
        }
        Some(out)
    }

    fn structural_diagnostics(&self, config: &Configuration) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        for key in config.values.keys() {
            if self.dimension(key).is_none() {
                diags.push(Diagnostic::ExtraneousKey { key: key.clone() });
            }
        }
        for dim in &self.dimensions {
            let Some(value) = config.values.get(&dim.name) else {
                diags.push(Diagnostic::MissingKey {
                    dim: dim.name.clone(),
                });
                continue;
            };
            match (dim.kind, value) {
                (DimensionKind::ScalarChoice, Value::Token(tok)) => {
                    if !dim.allows(tok) {
                        diags.push(Diagnostic::TokenNotAllowed {
                            dim: dim.name.clone(),
                            token: tok.clone(),
                        });
                    }
                }
                (DimensionKind::PerLayerList, Value::List(items)) => {
                    for tok in items {
                        if !dim.allows(tok) {
                            diags.push(Diagnostic::TokenNotAllowed {
                                dim: dim.name.clone(),
                                token: tok.clone(),
                            });
                        }
                    }
                    let source = dim.layer_count_source.as_deref().unwrap_or_default();
                    let expected = match config.values.get(source) {
                        Some(Value::Token(t)) => t.parse::<usize>().ok(),
                        _ => None,
                    };
                    match expected {
                        Some(n) if n != items.len() => diags.push(Diagnostic::LengthMismatch {
                            dim: dim.name.clone(),
                            expected: n,
                            found: items.len(),
                        }),
                        Some(_) => {}
                        None => diags.push(Diagnostic::UnresolvedLayerCount {
                            dim: dim.name.clone(),
                        }),
                    }
                }
                _ => diags.push(Diagnostic::KindMismatch {
                    dim: dim.name.clone(),
                }),
            }
        }
        diags
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Token(String),
    List(Vec<String>),
}

impl Value {
    fn write_canonical(&self, out: &mut String) {
        match self {
            Value::Token(t) => out.push_str(t),
            Value::List(items) => {
                out.push('[');
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(t);
                }
                out.push(']');
            }
        }
    }
}

/// One point of a configuration space: dimension name to token(s).
///
/// Keys are kept sorted, so two maps built in different insertion orders
/// compare equal and canonicalize identically.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration {
    pub values: BTreeMap<String, Value>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_token(&mut self, dim: &str, token: &str) -> &mut Self {
        self.values
            .insert(dim.to_string(), Value::Token(token.to_string()));
        self
    }

    pub fn set_list<S: AsRef<str>>(&mut self, dim: &str, tokens: &[S]) -> &mut Self {
        self.values.insert(
            dim.to_string(),
            Value::List(tokens.iter().map(|t| t.as_ref().to_string()).collect()),
        );
        self
    }

    pub fn with_token(mut self, dim: &str, token: &str) -> Self {
        self.set_token(dim, token);
        self
    }

    pub fn with_list<S: AsRef<str>>(mut self, dim: &str, tokens: &[S]) -> Self {
        self.set_list(dim, tokens);
        self
    }

    pub fn get(&self, dim: &str) -> Option<&Value> {
        self.values.get(dim)
    }

    pub fn token(&self, dim: &str) -> Option<&str> {
        match self.values.get(dim) {
            Some(Value::Token(t)) => Some(t),
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }
}

/// Deterministic serialization used for equality, table keys and LCS matching.
///
/// `key=token` pairs in lexicographic key order joined by `;`, lists as
/// `[t1,t2,...]`; dimensions the space does not know are dropped.
pub fn canonicalize(config: &Configuration, space: &ConfigSpace) -> String {
    let mut out = String::new();
    for (key, value) in &config.values {
        if space.dimension(key).is_none() {
            continue;
        }
        if !out.is_empty() {
            out.push(';');
        }
        out.push_str(key);
        out.push('=');
        value.write_canonical(&mut out);
    }
    out
}

/// Inverse of [`canonicalize`]; `None` when the text is not canonical form.
pub fn parse_canonical(text: &str) -> Option<Configuration> {
    let mut config = Configuration::new();
    if text.is_empty() {
        return Some(config);
    }
    let mut prev: Option<&str> = None;
    for part in text.split(';') {
        let (key, value) = part.split_once('=')?;
        if !valid_token(key) || prev.is_some_and(|p| p >= key) {
            return None;
        }
        prev = Some(key);
        let value = if let Some(inner) = value.strip_prefix('[') {
            let inner = inner.strip_suffix(']')?;
            let items: Vec<&str> = if inner.is_empty() {
                Vec::new()
            } else {
                inner.split(',').collect()
            };
            if items.iter().any(|t| !valid_token(t)) {
                return None;
            }
            Value::List(items.into_iter().map(str::to_string).collect())
        } else {
            if !valid_token(value) {
                return None;
            }
            Value::Token(value.to_string())
        };
        config.values.insert(key.to_string(), value);
    }
    Some(config)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    MissingKey { dim: String },
    ExtraneousKey { key: String },
    TokenNotAllowed { dim: String, token: String },
    LengthMismatch { dim: String, expected: usize, found: usize },
    UnresolvedLayerCount { dim: String },
    KindMismatch { dim: String },
    NotACandidate,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::MissingKey { dim } => write!(f, "missing key `{dim}`"),
            Diagnostic::ExtraneousKey { key } => write!(f, "extraneous key `{key}`"),
            Diagnostic::TokenNotAllowed { dim, token } => {
                write!(f, "token `{token}` not allowed for `{dim}`")
            }
            Diagnostic::LengthMismatch {
                dim,
                expected,
                found,
            } => write!(f, "`{dim}` has {found} entries, expected {expected}"),
            Diagnostic::UnresolvedLayerCount { dim } => {
                write!(f, "layer count for `{dim}` cannot be resolved")
            }
            Diagnostic::KindMismatch { dim } => write!(f, "wrong value kind for `{dim}`"),
            Diagnostic::NotACandidate => write!(f, "not one of the explicit candidates"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidityReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

pub fn validate(config: &Configuration, space: &ConfigSpace) -> ValidityReport {
    let mut diagnostics = space.structural_diagnostics(config);
    if space.mode == CandidateMode::ExplicitList {
        let key = canonicalize(config, space);
        let only_lengths = diagnostics
            .iter()
            .all(|d| matches!(d, Diagnostic::LengthMismatch { .. }));
        if space.is_candidate(&key) && only_lengths {
            diagnostics.clear();
        } else {
            diagnostics.push(Diagnostic::NotACandidate);
        }
    }
    ValidityReport { diagnostics }
}
