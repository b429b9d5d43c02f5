//! Event logging to stderr, keeping stdout free for data.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

pub struct Logger {
    json: bool,
}

impl Logger {
    pub fn new(json: bool) -> Self {
        Logger { json }
    }

    pub fn info(&self, event: &str, fields: &[(&str, String)]) {
        self.emit("info", event, fields);
    }

    pub fn warn(&self, event: &str, fields: &[(&str, String)]) {
        self.emit("warn", event, fields);
    }

    fn emit(&self, level: &str, event: &str, fields: &[(&str, String)]) {
        let stderr = std::io::stderr();
        let mut out = stderr.lock();
        if self.json {
            let ts = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0);
            let mut obj = serde_json::Map::new();
            obj.insert("ts".into(), serde_json::json!(ts));
            obj.insert("level".into(), serde_json::json!(level));
            obj.insert("event".into(), serde_json::json!(event));
            for (k, v) in fields {
                obj.insert((*k).into(), serde_json::json!(v));
            }
            let _ = writeln!(out, "{}", serde_json::Value::Object(obj));
        } else {
            let mut line = format!("{level:>5} {event}");
            for (k, v) in fields {
                line.push_str(&format!(" {k}={v}"));
            }
            let _ = writeln!(out, "{line}");
        }
    }
}
