use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::lcs::longest_common_substring_len;
use super::{ExperimentTable, Record};
use crate::model::{canonicalize, validate};
use crate::proposal::{parse_best_effort, parse_strict};

/// Tables larger than this go through a shared-token prefilter before LCS.
pub const PREFILTER_THRESHOLD: usize = 20_000;
/// Candidates kept by the prefilter.
pub const PREFILTER_KEEP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseQuality {
    /// The proposal is grammatical.
    Strict,
    /// Only some `key: value` pairs could be recovered.
    Partial,
    /// Nothing recognizable; matching used the raw text.
    Unparsed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match<'t> {
    pub record: &'t Record,
    /// True when the proposal was redirected to a different, similar record.
    pub matched: bool,
    pub parse: ParseQuality,
    /// Text compared against record keys (empty on the exact path).
    pub query_text: String,
}

fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split([';', '=', ',', '[', ']', '{', '}', '(', ')', '\'', '"', ':', ' '])
        .filter(|t| !t.is_empty())
}

fn prefilter<'t>(records: &'t [Record], query: &str) -> Vec<&'t Record> {
    let mut want: HashMap<&str, usize> = HashMap::new();
    for t in tokens(query) {
        *want.entry(t).or_default() += 1;
    }
    let mut scored: Vec<(usize, usize)> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut left = want.clone();
            let mut shared = 0;
            for t in tokens(&r.key) {
                if let Some(n) = left.get_mut(t) {
                    if *n > 0 {
                        *n -= 1;
                        shared += 1;
                    }
                }
            }
            (shared, i)
        })
        .collect();
    // Highest overlap first; record order (canonical keys) breaks ties.
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(PREFILTER_KEEP);
    scored.sort_by_key(|&(_, i)| i);
    scored.into_iter().map(|(_, i)| &records[i]).collect()
}

/// Resolves a raw proposal to a recorded configuration.
///
/// A proposal that parses, validates and is recorded is answered exactly.
/// Anything else is compared, by longest common substring, against every
/// record key: the canonical text of the best-effort parse is used when it
/// recovered at least one dimension, the raw text otherwise. Ties go to the
/// lexicographically smallest key.
pub fn match_most_similar<'t>(table: &'t ExperimentTable, raw: &str) -> Match<'t> {
    let space = &table.space;
    let strict = parse_strict(raw, space);
    if let Ok(config) = &strict {
        if validate(config, space).is_valid() {
            if let Some(record) = table.get(&canonicalize(config, space)) {
                return Match {
                    record,
                    matched: false,
                    parse: ParseQuality::Strict,
                    query_text: String::new(),
                };
            }
        }
    }
    let (config, parse) = match strict {
        Ok(c) => (c, ParseQuality::Strict),
        Err(_) => {
            let c = parse_best_effort(raw, space);
            let q = if c.is_empty() {
                ParseQuality::Unparsed
            } else {
                ParseQuality::Partial
            };
            (c, q)
        }
    };
    let canonical = canonicalize(&config, space);
    let query_text = if canonical.is_empty() {
        raw.trim().to_string()
    } else {
        canonical
    };

    let pool: Vec<&Record> = if table.len() > PREFILTER_THRESHOLD {
        prefilter(table.records(), &query_text)
    } else {
        table.records().iter().collect()
    };
    let mut best: Option<(&Record, usize)> = None;
    for record in pool {
        let len = longest_common_substring_len(&query_text, &record.key);
        if best.is_none_or(|(_, b)| len > b) {
            best = Some((record, len));
        }
    }
    let (record, _) = best.expect("tables are non-empty");
    Match {
        record,
        matched: true,
        parse,
        query_text,
    }
}
