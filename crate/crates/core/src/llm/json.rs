//! Lenient extraction of a JSON object from free-form model output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

const EXCERPT_CHARS: usize = 120;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("no parseable JSON object in model output: {excerpt:?}")]
pub struct ExtractionError {
    pub excerpt: String,
}

fn excerpt(text: &str) -> String {
    let mut out: String = text.chars().take(EXCERPT_CHARS).collect();
    if text.chars().count() > EXCERPT_CHARS {
        out.push_str("...");
    }
    out
}

/// Object with keys folded to lowercase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JsonObject(BTreeMap<String, Value>);

impl JsonObject {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(&key.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// String elements of a list value; a bare string counts as a list of one.
    pub fn strings(&self, key: &str) -> Vec<String> {
        match self.get(key) {
            Some(Value::Array(items)) => items.iter().filter_map(scalar_text).collect(),
            Some(v) => scalar_text(v)
                .into_iter()
                .filter(|s| !s.is_empty())
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn text(&self, key: &str) -> Option<String> {
        self.get(key).and_then(scalar_text)
    }

    pub fn tri(&self, key: &str) -> TriState {
        TriState::from_value(self.get(key))
    }

    pub fn flag(&self, key: &str) -> bool {
        self.tri(key) == TriState::Yes
    }
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Yes / No / Unknown answer to a yes-no question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriState {
    Yes,
    #[default]
    No,
    Unknown,
}

impl TriState {
    /// `Yes`, `y`, `true` and boolean true are yes; `unknown` is kept apart;
    /// everything else, including a missing value, is no.
    pub fn from_value(v: Option<&Value>) -> Self {
        match v {
            Some(Value::Bool(true)) => TriState::Yes,
            Some(Value::String(s)) => TriState::from_text(s),
            _ => TriState::No,
        }
    }

    pub fn from_text(s: &str) -> Self {
        let s = s.trim().trim_end_matches('.').to_lowercase();
        match s.as_str() {
            "yes" | "y" | "true" => TriState::Yes,
            "unknown" => TriState::Unknown,
            _ => TriState::No,
        }
    }

    pub fn is_yes(self) -> bool {
        self == TriState::Yes
    }
}

/// Finds the first balanced `{...}` block that parses as an object.
///
/// Prose, code fences and other text around the block are ignored. Single
/// quoted strings and Python-style `True`/`False`/`None` are accepted.
pub fn extract_json_object(content: &str) -> Result<JsonObject, ExtractionError> {
    let starts = content.match_indices('{').map(|(i, _)| i);
    for start in starts {
        let Some(end) = balanced_end(&content[start..]) else {
            continue;
        };
        let block = &content[start..start + end];
        if let Some(Value::Object(map)) = parse_lenient(block) {
            return Ok(JsonObject(
                map.into_iter()
                    .map(|(k, v)| (k.to_lowercase(), v))
                    .collect(),
            ));
        }
    }
    Err(ExtractionError {
        excerpt: excerpt(content),
    })
}

/// Byte length of the balanced block starting at `text[0] == '{'`.
fn balanced_end(text: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q && (q == '"' || closes_single(&text[i + 1..])) {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// A single quote ends a string only when followed by a delimiter, so
/// apostrophes inside words survive ("V's phone").
fn closes_single(rest: &str) -> bool {
    matches!(
        rest.trim_start().chars().next(),
        None | Some(',' | ':' | '}' | ']')
    )
}

fn parse_lenient(block: &str) -> Option<Value> {
    serde_json::from_str(block)
        .ok()
        .or_else(|| serde_json::from_str(&requote(block)).ok())
}

/// Rewrites single-quoted strings as JSON strings and Python literals as
/// JSON literals.
pub(crate) fn requote(block: &str) -> String {
    let mut out = String::with_capacity(block.len() + 8);
    let mut chars = block.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => {
                out.push('"');
                let mut escaped = false;
                for (_, c) in chars.by_ref() {
                    out.push(c);
                    if escaped {
                        escaped = false;
                    } else if c == '\\' {
                        escaped = true;
                    } else if c == '"' {
                        break;
                    }
                }
            }
            '\'' => {
                out.push('"');
                let mut escaped = false;
                for (j, c) in chars.by_ref() {
                    if escaped {
                        if c != '\'' {
                            out.push('\\');
                        }
                        out.push(c);
                        escaped = false;
                    } else if c == '\\' {
                        escaped = true;
                    } else if c == '\'' && closes_single(&block[j + 1..]) {
                        break;
                    } else if c == '"' {
                        out.push_str("\\\"");
                    } else {
                        out.push(c);
                    }
                }
                out.push('"');
            }
            c if c.is_ascii_alphabetic() => {
                let mut end = i + c.len_utf8();
                while let Some(&(j, d)) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        end = j + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push_str(match &block[i..end] {
                    "True" => "true",
                    "False" => "false",
                    "None" => "null",
                    word => word,
                });
            }
            c => out.push(c),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_quoted_example_answer() {
        let obj = extract_json_object(
            "{'technology':'No', 'phrases': [], 'internet':'No', 'participate':'No'}",
        )
        .unwrap();
        assert_eq!(obj.len(), 4);
        assert_eq!(obj.tri("technology"), TriState::No);
        assert!(obj.strings("phrases").is_empty());
    }

    #[test]
    fn prose_wrapped_object() {
        let obj = extract_json_object(
            "Sure! Here is the answer: {\"technology\":\"Yes\", \"phrases\": [\"phone\"], \"internet\": \"No\", \"participate\": \"No\"} Hope that helps.",
        )
        .unwrap();
        assert!(obj.flag("technology"));
        assert_eq!(obj.strings("phrases"), ["phone"]);
    }

    #[test]
    fn code_fence_and_key_case() {
        let obj =
            extract_json_object("```json\n{\"Technology\": true, \"SOURCE\": \"B\"}\n```").unwrap();
        assert!(obj.flag("technology"));
        assert_eq!(obj.text("source").as_deref(), Some("B"));
    }

    #[test]
    fn no_object_is_an_error() {
        let err = extract_json_object("No JSON here").unwrap_err();
        assert_eq!(err.excerpt, "No JSON here");
        assert!(extract_json_object("{'unterminated': 'x'").is_err());
    }

    #[test]
    fn apostrophes_and_python_literals() {
        let obj = extract_json_object(
            "{'sm': False, 'nok': True, 'source_known': None, 'phrases': ['V's phone', 'chat forums']}",
        )
        .unwrap();
        assert_eq!(obj.get("sm"), Some(&Value::Bool(false)));
        assert!(obj.flag("nok"));
        assert_eq!(obj.strings("phrases"), ["V's phone", "chat forums"]);
    }

    #[test]
    fn skips_unparseable_leading_block() {
        let obj = extract_json_object("{not json} then {\"a\": \"1\"}").unwrap();
        assert_eq!(obj.text("a").as_deref(), Some("1"));
    }

    #[test]
    fn tri_state_normalization() {
        for (s, t) in [
            ("Yes", TriState::Yes),
            ("yes.", TriState::Yes),
            ("Y", TriState::Yes),
            ("true", TriState::Yes),
            ("No", TriState::No),
            ("Unknown", TriState::Unknown),
            ("maybe", TriState::No),
        ] {
            assert_eq!(TriState::from_text(s), t, "{s}");
        }
        assert_eq!(TriState::from_value(None), TriState::No);
        assert_eq!(
            TriState::from_value(Some(&Value::Bool(true))),
            TriState::Yes
        );
    }

    fn render(obj: &BTreeMap<String, Vec<String>>, single: bool) -> String {
        let q = if single { '\'' } else { '"' };
        let items: Vec<String> = obj
            .iter()
            .map(|(k, vs)| {
                let list: Vec<String> = vs.iter().map(|v| format!("{q}{v}{q}")).collect();
                format!("{q}{k}{q}: [{}]", list.join(", "))
            })
            .collect();
        format!("Answer: {{{}}}", items.join(", "))
    }

    proptest! {
        #[test]
        fn rendered_objects_round_trip(
            obj in proptest::collection::btree_map("[a-z_]{1,8}", proptest::collection::vec("[A-Za-z0-9 .,'?-]{0,12}", 0..4), 0..5),
            single in any::<bool>(),
        ) {
            // a value ending in an apostrophe right before a delimiter is
            // genuinely ambiguous in single-quoted form
            prop_assume!(!single || obj.values().flatten().all(|v| !v.contains('\'')));
            let parsed = extract_json_object(&render(&obj, single)).unwrap();
            prop_assert_eq!(parsed.len(), obj.len());
            for (k, vs) in &obj {
                prop_assert_eq!(&parsed.strings(k), vs);
            }
        }
    }
}
