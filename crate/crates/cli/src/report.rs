//! Experiment reports: ordered `key = value` results plus pass/fail checks.

use std::fmt::{Display, Write as _};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable constraint, e.g. `<= 0.05`.
    pub limit: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub digest: String,
    pub values: Vec<(String, String)>,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
    pub cache_hit: bool,
    pub wall_seconds: f64,
}

const RESERVED: [&str; 5] = ["experiment", "config_digest", "files", "cache_hit", "wall_seconds"];

impl ExperimentReport {
    pub fn new(experiment: &str, digest: &str) -> Self {
        Self {
            experiment: experiment.into(),
            digest: digest.into(),
            values: Vec::new(),
            checks: Vec::new(),
            files: Vec::new(),
            cache_hit: false,
            wall_seconds: 0.0,
        }
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Display) {
        let key = key.into();
        let value = value.to_string();
        match self.values.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.values.push((key, value)),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, value: f64, limit: impl Into<String>, passed: bool) {
        self.checks.push(Check {
            name: name.into(),
            value,
            limit: limit.into(),
            passed,
        });
    }

    /// `value <= limit`.
    pub fn check_at_most(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.check(name, value, format!("<= {limit}"), value <= limit);
    }

    /// `|value| <= limit`.
    pub fn check_abs_at_most(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.check(name, value, format!("|.| <= {limit}"), value.abs() <= limit);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn get_bool(&self, key: &str) -> Option<bool> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: &dyn Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("experiment", &self.experiment);
        line("config_digest", &self.digest);
        for (k, v) in &self.values {
            line(k, v);
        }
        for c in &self.checks {
            line(&format!("check.{}.value", c.name), &c.value);
            line(&format!("check.{}.limit", c.name), &c.limit);
            line(&format!("check.{}.passed", c.name), &c.passed);
        }
        line("files", &self.files.join(","));
        line("cache_hit", &self.cache_hit);
        line("wall_seconds", &format!("{:.3}", self.wall_seconds));
        line("passed", &self.passed());
        out
    }

    /// Inverse of [`to_text`](Self::to_text).
    pub fn from_text(text: &str) -> Option<Self> {
        let mut r = ExperimentReport::new("", "");
        for raw in text.lines() {
            let (k, v) = raw.split_once(" = ")?;
            if let Some(rest) = k.strip_prefix("check.") {
                let (name, field) = rest.rsplit_once('.')?;
                if r.checks.last().is_none_or(|c| c.name != name) {
                    r.check(name, f64::NAN, "", false);
                }
                let c = r.checks.last_mut().expect("just pushed");
                match field {
                    "value" => c.value = v.parse().ok()?,
                    "limit" => c.limit = v.to_string(),
                    "passed" => c.passed = v.parse().ok()?,
                    _ => return None,
                }
                continue;
            }
            match k {
                "experiment" => r.experiment = v.into(),
                "config_digest" => r.digest = v.into(),
                "files" => r.files = v.split(',').filter(|s| !s.is_empty()).map(String::from).collect(),
                "cache_hit" => r.cache_hit = v.parse().ok()?,
                "wall_seconds" => r.wall_seconds = v.parse().ok()?,
                "passed" => {}
                _ => r.values.push((k.into(), v.into())),
            }
        }
        debug_assert!(r.values.iter().all(|(k, _)| !RESERVED.contains(&k.as_str())));
        Some(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut r = ExperimentReport::new("weyl_check", "abc123");
        r.set("theta", 2.0);
        r.set("K2048.c_mean", 12.7);
        r.check_at_most("weyl", 0.0106, 0.05);
        r.check("oracle", f64::NAN, "<= 0.01", false);
        r.files = vec!["a.csv".into(), "b.csv".into()];
        r.wall_seconds = 1.5;
        let text = r.to_text();
        assert!(text.contains("check.weyl.passed = true\n"));
        assert!(text.ends_with("passed = false\n"));
        let back = ExperimentReport::from_text(&text).unwrap();
        assert_eq!(back.values, r.values);
        assert_eq!(back.files, r.files);
        assert_eq!(back.checks.len(), 2);
        assert!(back.checks[1].value.is_nan());
        assert_eq!(back.checks[0], r.checks[0]);
    }

    #[test]
    fn set_overwrites() {
        let mut r = ExperimentReport::new("spectrum", "d");
        r.set("a", 1);
        r.set("a", 2);
        assert_eq!(r.get("a"), Some("2"));
        assert!(r.passed());
    }
}
