//! Lenient readers for model replies.
//!
//! Replies are expected to be JSON, but models wrap it in code fences or
//! chatter often enough that the first balanced JSON value is dug out of the
//! text before giving up.

use serde_json::Value;

/// The JSON value in `text`, tolerating fences and surrounding prose.
pub fn json_payload(text: &str) -> Result<Value, String> {
    let trimmed = text.trim();
    if let Ok(v) = serde_json::from_str(trimmed) {
        return Ok(v);
    }
    for (i, c) in trimmed.char_indices() {
        if c == '{' || c == '[' {
            let mut stream = serde_json::Deserializer::from_str(&trimmed[i..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                return Ok(v);
            }
        }
    }
    Err(format!("no JSON value in reply: {}", preview(trimmed)))
}

fn preview(s: &str) -> String {
    s.chars().take(120).collect()
}

/// The array under the first of `keys`, or the value itself if it is an array.
fn list<'a>(value: &'a Value, keys: &[&str]) -> Result<&'a Vec<Value>, String> {
    if let Some(items) = value.as_array() {
        return Ok(items);
    }
    keys.iter()
        .find_map(|k| value.get(k).and_then(Value::as_array))
        .ok_or_else(|| format!("expected a list under {keys:?}"))
}

fn text_field<'a>(value: &'a Value, keys: &[&str]) -> Option<&'a str> {
    match value {
        Value::String(s) => Some(s),
        Value::Object(_) => keys.iter().find_map(|k| value.get(k).and_then(Value::as_str)),
        _ => None,
    }
}

/// A nonnegative finite number, also accepted as a numeric string.
fn weight(value: &Value) -> Option<f64> {
    let w = match value {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches('%').parse::<f64>().ok().map(|v| {
            if s.trim().ends_with('%') {
                v / 100.0
            } else {
                v
            }
        }),
        _ => None,
    }?;
    (w.is_finite() && w >= 0.0).then_some(w)
}

/// Phrases with their synonyms flattened into one list, unnormalized.
pub fn parse_keyphrases(text: &str) -> Result<Vec<String>, String> {
    let value = json_payload(text)?;
    let mut out = Vec::new();
    for item in list(&value, &["keyphrases", "descriptors", "phrases"])? {
        if let Some(p) = text_field(item, &["phrase", "keyphrase", "descriptor"]) {
            out.push(p.to_string());
        }
        if let Some(syn) = item.get("synonyms").and_then(Value::as_array) {
            out.extend(syn.iter().filter_map(Value::as_str).map(str::to_string));
        }
    }
    Ok(out)
}

pub fn parse_concepts(text: &str) -> Result<Vec<String>, String> {
    let value = json_payload(text)?;
    Ok(list(&value, &["concepts", "questions"])?
        .iter()
        .filter_map(|item| text_field(item, &["question", "concept"]))
        .map(|q| q.trim().to_string())
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedProposal {
    /// Questions with their reported weights, `None` where missing or invalid.
    pub candidates: Vec<(String, Option<f64>)>,
    pub incumbent: Option<f64>,
}

pub fn parse_proposal(text: &str) -> Result<ParsedProposal, String> {
    let value = json_payload(text)?;
    let weight_of = |item: &Value| {
        ["probability", "weight", "score"]
            .iter()
            .find_map(|k| item.get(k))
            .and_then(weight)
    };
    let candidates = list(&value, &["candidates", "concepts", "questions"])?
        .iter()
        .filter_map(|item| {
            text_field(item, &["question", "concept"]).map(|q| (q.trim().to_string(), weight_of(item)))
        })
        .collect();
    let incumbent = ["incumbent_probability", "current_probability"]
        .iter()
        .find_map(|k| value.get(k))
        .and_then(weight);
    Ok(ParsedProposal { candidates, incumbent })
}

fn answer(value: &Value) -> Option<f64> {
    let v = match value {
        Value::Bool(b) => Some(f64::from(u8::from(*b))),
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Some(1.0),
            "no" => Some(0.0),
            _ => weight(value),
        },
        Value::Object(_) => ["probability", "answer", "value"]
            .iter()
            .find_map(|k| value.get(k))
            .and_then(answer),
        _ => value.as_f64(),
    }?;
    v.is_finite().then_some(v)
}

/// Exactly `count` answers in question order. Values are returned unclamped.
pub fn parse_annotations(text: &str, count: usize) -> Result<Vec<f64>, String> {
    let value = json_payload(text)?;
    let items = list(&value, &["answers", "probabilities"])?;
    if items.len() != count {
        return Err(format!("expected {count} answers, got {}", items.len()));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, item)| answer(item).ok_or_else(|| format!("answer {} is not a probability", i + 1)))
        .collect()
}
