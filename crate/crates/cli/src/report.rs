use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

/// Flat key-value report; nested objects become dotted keys.
#[derive(Default)]
pub struct Report(BTreeMap<String, Value>);

fn flatten(prefix: &str, v: Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other);
        }
    }
}

impl Report {
    pub fn add(&mut self, prefix: &str, v: impl Serialize) -> &mut Self {
        let value = serde_json::to_value(v).expect("report values serialize");
        flatten(prefix, value, &mut self.0);
        self
    }

    #[cfg(test)]
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.0).expect("report serializes") + "\n"
    }

    /// `key = value` lines for scalar entries.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.0 {
            if !v.is_array() {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn nested_objects_flatten_to_dotted_keys() {
        let mut r = Report::default();
        r.add("eval", json!({"fscore": {"patch": 1.0}, "recall": 0.5, "history": [1, 2]}));
        r.add("ratio", 1.0);
        assert_eq!(r.get("eval.fscore.patch"), Some(&json!(1.0)));
        assert_eq!(r.get("ratio"), Some(&json!(1.0)));
        assert!(r.to_text().contains("eval.recall = 0.5"));
        assert!(!r.to_text().contains("history"));
    }
}
