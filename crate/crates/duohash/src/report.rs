//! Deterministic report emission: two-column CSV and a JSON object, both
//! byte-stable across reruns with the same inputs.

use crate::error::Result;

/// An ordered list of named metric values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    rows: Vec<(String, f64)>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn push(&mut self, metric: impl Into<String>, value: f64) {
        self.rows.push((metric.into(), value));
    }

    pub fn rows(&self) -> &[(String, f64)] {
        &self.rows
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|(m, _)| m == metric)
            .map(|(_, v)| *v)
    }

    /// `metric,value` rows in insertion order; values print in shortest
    /// round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (metric, value) in &self.rows {
            out.push_str(metric);
            out.push(',');
            out.push_str(&format!("{value}"));
            out.push('\n');
        }
        out
    }

    /// JSON object keyed by metric name, sorted keys.
    pub fn to_json(&self) -> Result<String> {
        let mut map = serde_json::Map::new();
        for (metric, value) in &self.rows {
            map.insert(
                metric.clone(),
                serde_json::Number::from_f64(*value)
                    .map(serde_json::Value::Number)
                    .unwrap_or(serde_json::Value::Null),
            );
        }
        Ok(serde_json::to_string_pretty(&serde_json::Value::Object(map))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_are_stable() {
        let mut r = Report::new();
        r.push("mu_ap", 0.59375);
        r.push("recall", 2.0 / 3.0);
        assert_eq!(
            r.to_csv(),
            "metric,value\nmu_ap,0.59375\nrecall,0.6666666666666666\n"
        );
        assert_eq!(r.to_csv(), r.clone().to_csv());
        let json = r.to_json().unwrap();
        assert_eq!(json, r.to_json().unwrap());
        assert!(json.contains("\"mu_ap\": 0.59375"));
        assert_eq!(r.get("mu_ap"), Some(0.59375));
    }
}
