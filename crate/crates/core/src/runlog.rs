//! Line-oriented JSON run logs.

use std::io::Write;

use serde_json::{Map, Value};

use crate::error::Result;

/// Ordered list of `{"event": ..., ...}` records. No wall-clock data is
/// recorded, so logs of identical runs are identical.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    records: Vec<Value>,
}

impl RunLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; `fields` should be a JSON object (other values are
    /// stored under `"value"`).
    pub fn record(&mut self, event: &str, fields: Value) {
        let mut map = Map::new();
        map.insert("event".into(), Value::String(event.into()));
        match fields {
            Value::Object(obj) => map.extend(obj),
            Value::Null => {}
            other => {
                map.insert("value".into(), other);
            }
        }
        self.records.push(Value::Object(map));
    }

    pub fn records(&self) -> &[Value] {
        &self.records
    }

    pub fn extend(&mut self, other: RunLog) {
        self.records.extend(other.records);
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn records_are_one_object_per_line() {
        let mut log = RunLog::new();
        log.record("step", json!({"k": 1, "iterations": 3}));
        log.record("note", json!("plain"));
        let mut buf = Vec::new();
        log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines[0]["event"], "step");
        assert_eq!(lines[0]["iterations"], 3);
        assert_eq!(lines[1]["value"], "plain");
    }
}
