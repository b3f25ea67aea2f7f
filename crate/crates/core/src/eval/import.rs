//! Import third-party MCQA files through an explicit field mapping.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EvalError, McqaItem, QueryType};

/// Where each [`McqaItem`] field lives in a source record. Paths are
/// dot-separated (`"meta.type"`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub item_id: String,
    pub question: String,
    /// An array of four choices, or an object keyed by `choice_keys`.
    pub choices: String,
    pub choice_keys: Vec<String>,
    /// Index, letter or choice text.
    pub gold: String,
    /// Added to numeric gold values read from the file; `-1` for 1-based
    /// sources.
    pub gold_offset: i64,
    pub query_type: String,
    pub default_query_type: Option<QueryType>,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            item_id: "id".into(),
            question: "question".into(),
            choices: "options".into(),
            choice_keys: ["A", "B", "C", "D"].map(String::from).to_vec(),
            gold: "answer".into(),
            gold_offset: 0,
            query_type: "query_type".into(),
            default_query_type: None,
        }
    }
}

fn get<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |cur, key| match cur {
        Value::Object(m) => m.get(key),
        Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get(i)),
        _ => None,
    })
}

fn as_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

impl FieldMap {
    pub fn map_record(&self, rec: &Value, position: usize) -> Result<McqaItem, EvalError> {
        let item_id = get(rec, &self.item_id)
            .and_then(as_text)
            .unwrap_or_else(|| format!("item-{position}"));
        let bad = |message: String| EvalError::InvalidItem {
            item_id: item_id.clone(),
            message,
        };
        let question = get(rec, &self.question)
            .and_then(Value::as_str)
            .ok_or_else(|| bad(format!("no string at {:?}", self.question)))?
            .to_string();
        let choices: Vec<String> = match get(rec, &self.choices) {
            Some(Value::Array(a)) => a.iter().filter_map(as_text).collect(),
            Some(Value::Object(m)) => self
                .choice_keys
                .iter()
                .filter_map(|k| m.get(k).and_then(as_text))
                .collect(),
            _ => self
                .choice_keys
                .iter()
                .filter_map(|k| get(rec, k).and_then(as_text))
                .collect(),
        };
        let gold_value = get(rec, &self.gold).ok_or_else(|| bad(format!("no gold answer at {:?}", self.gold)))?;
        let gold_index = match gold_value {
            Value::Number(n) => n
                .as_i64()
                .map(|i| i + self.gold_offset)
                .and_then(|i| usize::try_from(i).ok()),
            Value::String(s) => {
                let t = s.trim();
                let letter = self.choice_keys.iter().position(|k| k.eq_ignore_ascii_case(t));
                letter
                    .or_else(|| {
                        t.parse::<i64>()
                            .ok()
                            .and_then(|i| usize::try_from(i + self.gold_offset).ok())
                    })
                    .or_else(|| choices.iter().position(|c| c.trim() == t))
            }
            _ => None,
        }
        .ok_or_else(|| bad(format!("cannot interpret gold answer {gold_value}")))?;
        let query_type = match get(rec, &self.query_type).and_then(Value::as_str) {
            Some(s) => s.parse().map_err(bad)?,
            None => self
                .default_query_type
                .ok_or_else(|| bad(format!("no query type at {:?}", self.query_type)))?,
        };
        let item = McqaItem {
            item_id: item_id.clone(),
            question,
            choices,
            gold_index,
            query_type,
        };
        item.validate()?;
        Ok(item)
    }
}

/// Read a JSON array or JSON-lines file and map every record.
pub fn import_eval_set(path: impl AsRef<Path>, map: &FieldMap) -> Result<Vec<McqaItem>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: usize, e: serde_json::Error| EvalError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    };
    let records: Vec<Value> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(|e| parse_err(e.line(), e))?
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_err(i + 1, e)))
            .collect::<Result<_, _>>()?
    };
    records
        .iter()
        .enumerate()
        .map(|(i, r)| map.map_record(r, i))
        .collect()
}
