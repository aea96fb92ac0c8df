//! Reading and writing agent-facing configuration text.
//!
//! Agents answer with Python-literal dicts (`{'lr': 1e-06, 'mb': 32}`), JSON
//! objects, bare arrays for single-vector spaces, or canonical text. The
//! strict reader accepts exactly those forms; the best-effort reader recovers
//! whatever `key: value` pairs it can find for dimensions the space knows.

use thiserror::Error;

use crate::model::{ConfigSpace, Configuration, DimensionKind, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty proposal")]
    Empty,
    #[error("unexpected {found} at byte {pos}")]
    Unexpected { pos: usize, found: String },
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("array of {found} values cannot map onto {expected} scalar dimensions")]
    ArrayArity { expected: usize, found: usize },
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, pos: 0 }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn unexpected(&self) -> ParseError {
        ParseError::Unexpected {
            pos: self.pos,
            found: match self.peek() {
                Some(c) => format!("`{c}`"),
                None => "end of input".to_string(),
            },
        }
    }

    fn expect(&mut self, want: char) -> Result<(), ParseError> {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    /// A quoted string or a bare run of token characters.
    fn scalar(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some(q @ ('\'' | '"')) => {
                self.bump();
                let start = self.pos;
                while let Some(c) = self.peek() {
                    if c == q {
                        let s = self.text[start..self.pos].to_string();
                        self.bump();
                        return Ok(s);
                    }
                    if c == '\\' {
                        return Err(self.unexpected());
                    }
                    self.bump();
                }
                Err(self.unexpected())
            }
            _ => {
                let start = self.pos;
                while self
                    .peek()
                    .is_some_and(|c| !c.is_whitespace() && !",:[](){}'\";=".contains(c))
                {
                    self.bump();
                }
                if self.pos == start {
                    Err(self.unexpected())
                } else {
                    Ok(self.text[start..self.pos].to_string())
                }
            }
        }
    }

    fn list(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect('[')?;
        let mut items = Vec::new();
        self.skip_ws();
        if self.peek() == Some(']') {
            self.bump();
            return Ok(items);
        }
        loop {
            items.push(self.scalar()?);
            self.skip_ws();
            match self.bump() {
                Some(',') => continue,
                Some(']') => return Ok(items),
                _ => {
                    self.pos -= 1.min(self.pos);
                    return Err(self.unexpected());
                }
            }
        }
    }

    fn value(&mut self) -> Result<Value, ParseError> {
        self.skip_ws();
        if self.peek() == Some('[') {
            Ok(Value::List(self.list()?))
        } else {
            Ok(Value::Token(self.scalar()?))
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.text.len()
    }
}

fn parse_dict(text: &str) -> Result<Configuration, ParseError> {
    let mut cur = Cursor::new(text);
    cur.expect('{')?;
    let mut config = Configuration::new();
    cur.skip_ws();
    if cur.peek() == Some('}') {
        cur.bump();
    } else {
        loop {
            let key = cur.scalar()?;
            cur.expect(':')?;
            let value = cur.value()?;
            if config.values.insert(key.clone(), value).is_some() {
                return Err(ParseError::DuplicateKey(key));
            }
            cur.skip_ws();
            match cur.peek() {
                Some(',') => {
                    cur.bump();
                    cur.skip_ws();
                    if cur.peek() == Some('}') {
                        cur.bump();
                        break;
                    }
                }
                Some('}') => {
                    cur.bump();
                    break;
                }
                _ => return Err(cur.unexpected()),
            }
        }
    }
    if cur.at_end() {
        Ok(config)
    } else {
        Err(cur.unexpected())
    }
}

fn parse_canonical_form(text: &str) -> Result<Configuration, ParseError> {
    let mut cur = Cursor::new(text);
    let mut config = Configuration::new();
    loop {
        let key = cur.scalar()?;
        cur.expect('=')?;
        let value = cur.value()?;
        if config.values.insert(key.clone(), value).is_some() {
            return Err(ParseError::DuplicateKey(key));
        }
        cur.skip_ws();
        match cur.peek() {
            Some(';') => {
                cur.bump();
            }
            None => return Ok(config),
            _ => return Err(cur.unexpected()),
        }
    }
}

fn positional(items: Vec<String>, space: &ConfigSpace) -> Result<Configuration, ParseError> {
    let dims = space.dimensions();
    if items.len() != dims.len() || dims.iter().any(|d| d.kind != DimensionKind::ScalarChoice) {
        return Err(ParseError::ArrayArity {
            expected: dims.len(),
            found: items.len(),
        });
    }
    let mut config = Configuration::new();
    for (dim, tok) in dims.iter().zip(items) {
        config.set_token(&dim.name, &tok);
    }
    Ok(config)
}

/// Parses a well-formed proposal. Grammar errors, duplicate keys and
/// trailing garbage are rejected; whether the result lies in the space is
/// [`crate::model::validate`]'s business.
pub fn parse_strict(raw: &str, space: &ConfigSpace) -> Result<Configuration, ParseError> {
    let text = raw.trim();
    match text.chars().next() {
        None => Err(ParseError::Empty),
        Some('{') => parse_dict(text),
        Some('[') => {
            let mut cur = Cursor::new(text);
            let items = cur.list()?;
            if !cur.at_end() {
                return Err(cur.unexpected());
            }
            positional(items, space)
        }
        Some(_) => parse_canonical_form(text),
    }
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || "_.-+".contains(c)
}

fn find_key(text: &str, name: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(off) = text[from..].find(name) {
        let start = from + off;
        let end = start + name.len();
        let before_ok = text[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !is_name_char(c));
        let mut j = end;
        while j < bytes.len() && (bytes[j] == b'\'' || bytes[j] == b'"') {
            j += 1;
        }
        while j < bytes.len() && (bytes[j] as char).is_whitespace() {
            j += 1;
        }
        if before_ok && j < bytes.len() && (bytes[j] == b':' || bytes[j] == b'=') {
            return Some(j + 1);
        }
        from = start + 1;
    }
    None
}

fn clean_token(s: &str) -> Option<String> {
    let t = s
        .trim()
        .trim_matches(|c: char| c == '\'' || c == '"' || c.is_whitespace());
    if t.is_empty() || t.chars().any(|c| "[](){}:;=,".contains(c)) {
        None
    } else {
        Some(t.to_string())
    }
}

/// Recovers as much of a malformed proposal as possible. The result may be
/// empty or partial; tokens are kept verbatim.
pub fn parse_best_effort(raw: &str, space: &ConfigSpace) -> Configuration {
    if let Ok(c) = parse_strict(raw, space) {
        return c;
    }
    let text = raw.trim();
    let mut config = Configuration::new();
    for dim in space.dimensions() {
        let Some(mut pos) = find_key(text, &dim.name) else {
            continue;
        };
        let rest = &text[pos..];
        let trimmed = rest.trim_start();
        pos += rest.len() - trimmed.len();
        let rest = &text[pos..];
        match dim.kind {
            DimensionKind::PerLayerList => {
                let body = rest.trim_start_matches(['[', '(']);
                let stop = body.find([']', ')', '}', ':', ';', '=']).unwrap_or(body.len());
                let mut pieces: Vec<&str> = body[..stop].split(',').collect();
                // An unclosed list runs into the next `key:`; drop that key.
                if matches!(body[stop..].chars().next(), Some(':' | '=')) {
                    pieces.pop();
                }
                let items: Vec<String> = pieces.into_iter().filter_map(clean_token).collect();
                if !items.is_empty() {
                    config.set_list(&dim.name, &items);
                }
            }
            DimensionKind::ScalarChoice => {
                let end = rest
                    .find(|c: char| ",;}])".contains(c) || c.is_whitespace())
                    .unwrap_or(rest.len());
                if let Some(tok) = clean_token(&rest[..end]) {
                    config.set_token(&dim.name, &tok);
                }
            }
        }
    }
    if config.is_empty() && text.starts_with(['[', '(']) {
        let body = text.trim_start_matches(['[', '(']);
        let body = body.trim_end_matches([']', ')', '}']);
        let items: Vec<String> = body.split(',').filter_map(clean_token).collect();
        for (dim, tok) in space
            .dimensions()
            .iter()
            .filter(|d| d.kind == DimensionKind::ScalarChoice)
            .zip(items)
        {
            config.set_token(&dim.name, &tok);
        }
    }
    config
}

/// Whether a token is written without quotes in Python-literal output.
fn is_numeric_token(tok: &str) -> bool {
    tok.parse::<f64>().is_ok() && tok.chars().all(|c| c.is_ascii_digit() || "+-.eE".contains(c))
}

pub(crate) fn py_token(tok: &str) -> String {
    if is_numeric_token(tok) {
        tok.to_string()
    } else {
        format!("'{tok}'")
    }
}

pub(crate) fn py_list<S: AsRef<str>>(items: &[S]) -> String {
    let inner: Vec<String> = items.iter().map(|t| py_token(t.as_ref())).collect();
    format!("[{}]", inner.join(", "))
}

/// Renders a configuration as a Python-literal dict in the space's
/// dimension order, the form agents are asked to produce.
pub fn render_proposal(config: &Configuration, space: &ConfigSpace) -> String {
    let mut parts = Vec::new();
    for dim in space.dimensions() {
        if let Some(value) = config.get(&dim.name) {
            let v = match value {
                Value::Token(t) => py_token(t),
                Value::List(items) => py_list(items),
            };
            parts.push(format!("'{}': {}", dim.name, v));
        }
    }
    format!("{{{}}}", parts.join(", "))
}

/// Array form used for single-vector spaces (all scalar dimensions read
/// positionally, as in data-mixture proposals).
pub fn render_array(config: &Configuration, space: &ConfigSpace) -> Option<String> {
    let mut toks = Vec::new();
    for dim in space.dimensions() {
        match config.get(&dim.name)? {
            Value::Token(t) => toks.push(t.clone()),
            Value::List(_) => return None,
        }
    }
    Some(py_list(&toks))
}
