//! Certification report: a canonical JSON document.
//!
//! Reports are written by a purpose-built serializer so the byte output is
//! reproducible: object keys appear in sorted order, floats are rendered
//! with exactly 12 significant digits, and indentation is fixed. Every
//! numeric check is stored as a self-describing `{value, threshold, cmp,
//! pass}` object so a committed report can be re-validated against its own
//! thresholds (`morse-lab check`).

use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// A JSON value with deterministic rendering.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(BTreeMap<String, Json>),
}

impl Json {
    pub fn obj(entries: Vec<(&str, Json)>) -> Json {
        Json::Obj(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    pub fn arr<I: IntoIterator<Item = Json>>(items: I) -> Json {
        Json::Arr(items.into_iter().collect())
    }

    pub fn floats<'a, I: IntoIterator<Item = &'a f64>>(items: I) -> Json {
        Json::Arr(items.into_iter().map(|&v| Json::Float(v)).collect())
    }

    pub fn str(s: impl Into<String>) -> Json {
        Json::Str(s.into())
    }

    /// Canonical rendering: sorted keys, fixed float format, 2-space indent.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, 0);
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String, indent: usize) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => out.push_str(&i.to_string()),
            Json::Float(v) => out.push_str(&format_float(*v)),
            Json::Str(s) => write_json_string(out, s),
            Json::Arr(items) => {
                if items.is_empty() {
                    out.push_str("[]");
                    return;
                }
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    push_indent(out, indent + 1);
                    item.write(out, indent + 1);
                }
                out.push('\n');
                push_indent(out, indent);
                out.push(']');
            }
            Json::Obj(map) => {
                if map.is_empty() {
                    out.push_str("{}");
                    return;
                }
                out.push('{');
                for (i, (k, v)) in map.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push('\n');
                    push_indent(out, indent + 1);
                    write_json_string(out, k);
                    out.push_str(": ");
                    v.write(out, indent + 1);
                }
                out.push('\n');
                push_indent(out, indent);
                out.push('}');
            }
        }
    }
}

fn push_indent(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

/// 12 significant digits, scientific notation. Reports must never contain
/// non-finite numbers; that is a pipeline bug, not a data condition.
fn format_float(v: f64) -> String {
    assert!(v.is_finite(), "non-finite value reached the report writer");
    let v = if v == 0.0 { 0.0 } else { v }; // normalise -0.0
    format!("{:.11e}", v)
}

fn write_json_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// A self-describing numeric check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Check {
    pub value: f64,
    pub threshold: f64,
    pub cmp: Cmp,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    /// Pass iff value ≤ threshold.
    Le,
    /// Pass iff value ≥ threshold.
    Ge,
}

impl Check {
    pub fn le(value: f64, threshold: f64) -> Check {
        Check { value, threshold, cmp: Cmp::Le, pass: value <= threshold }
    }

    pub fn ge(value: f64, threshold: f64) -> Check {
        Check { value, threshold, cmp: Cmp::Ge, pass: value >= threshold }
    }

    pub fn to_json(self) -> Json {
        Json::obj(vec![
            ("value", Json::Float(self.value)),
            ("threshold", Json::Float(self.threshold)),
            ("cmp", Json::str(match self.cmp {
                Cmp::Le => "le",
                Cmp::Ge => "ge",
            })),
            ("pass", Json::Bool(self.pass)),
        ])
    }
}

/// Result of re-validating a report against its own thresholds.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub checks_seen: usize,
    pub inconsistencies: Vec<String>,
}

impl CheckOutcome {
    pub fn consistent(&self) -> bool {
        self.inconsistencies.is_empty()
    }
}

/// Walk a report document and re-evaluate every `{value, threshold, cmp,
/// pass}` object, plus the verdict/overall rollup.
pub fn check_report(text: &str) -> Result<CheckOutcome> {
    let doc: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("report parse error: {e}")))?;
    let mut outcome = CheckOutcome { checks_seen: 0, inconsistencies: Vec::new() };
    walk(&doc, "$", &mut outcome);

    // Overall verdict must match the per-theorem verdicts.
    if let (Some(serde_json::Value::Object(verdicts)), Some(overall)) =
        (doc.get("verdicts"), doc.get("overall"))
    {
        let all_ok = verdicts.values().all(|v| {
            matches!(v.as_str(), Some("pass") | Some("not-applicable"))
        });
        let overall_str = overall.as_str().unwrap_or("");
        let expected = if all_ok { "pass" } else { "fail" };
        if overall_str != expected {
            outcome.inconsistencies.push(format!(
                "overall is '{overall_str}' but verdicts imply '{expected}'"
            ));
        }
    }
    Ok(outcome)
}

fn walk(v: &serde_json::Value, path: &str, outcome: &mut CheckOutcome) {
    match v {
        serde_json::Value::Object(map) => {
            if let (Some(value), Some(threshold), Some(cmp), Some(pass)) = (
                map.get("value").and_then(|x| x.as_f64()),
                map.get("threshold").and_then(|x| x.as_f64()),
                map.get("cmp").and_then(|x| x.as_str()),
                map.get("pass").and_then(|x| x.as_bool()),
            ) {
                outcome.checks_seen += 1;
                let recomputed = match cmp {
                    "le" => value <= threshold,
                    "ge" => value >= threshold,
                    other => {
                        outcome
                            .inconsistencies
                            .push(format!("{path}: unknown cmp '{other}'"));
                        return;
                    }
                };
                if recomputed != pass {
                    outcome.inconsistencies.push(format!(
                        "{path}: stored pass={pass} but value {value:.6e} {cmp} {threshold:.6e} gives {recomputed}"
                    ));
                }
            }
            for (k, child) in map {
                walk(child, &format!("{path}.{k}"), outcome);
            }
        }
        serde_json::Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                walk(child, &format!("{path}[{i}]"), outcome);
            }
        }
        _ => {}
    }
}

/// Strip a top-level key (used to drop wall-clock timings before byte
/// comparison) and re-render canonically.
pub fn strip_key_and_rerender(text: &str, key: &str) -> Result<String> {
    let mut doc: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("report parse error: {e}")))?;
    if let serde_json::Value::Object(map) = &mut doc {
        map.remove(key);
    }
    Ok(serde_to_canonical(&doc).render())
}

fn serde_to_canonical(v: &serde_json::Value) -> Json {
    match v {
        serde_json::Value::Null => Json::Null,
        serde_json::Value::Bool(b) => Json::Bool(*b),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Json::Int(i)
            } else {
                Json::Float(n.as_f64().unwrap_or(f64::NAN))
            }
        }
        serde_json::Value::String(s) => Json::Str(s.clone()),
        serde_json::Value::Array(items) => Json::Arr(items.iter().map(serde_to_canonical).collect()),
        serde_json::Value::Object(map) => Json::Obj(
            map.iter().map(|(k, v)| (k.clone(), serde_to_canonical(v))).collect(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering_is_sorted_and_stable() {
        let j = Json::obj(vec![
            ("zeta", Json::Int(1)),
            ("alpha", Json::Float(0.5)),
            ("mid", Json::arr(vec![Json::Bool(true), Json::Null])),
        ]);
        let r1 = j.render();
        let r2 = j.render();
        assert_eq!(r1, r2);
        let alpha_pos = r1.find("alpha").unwrap();
        let zeta_pos = r1.find("zeta").unwrap();
        assert!(alpha_pos < zeta_pos);
    }

    #[test]
    fn float_format_has_12_significant_digits() {
        assert_eq!(format_float(1.0), "1.00000000000e0");
        assert_eq!(format_float(0.0), "0.00000000000e0");
        assert_eq!(format_float(-0.0), "0.00000000000e0");
        let s = format_float(std::f64::consts::PI);
        assert!(s.starts_with("3.14159265359"));
    }

    #[test]
    fn checks_evaluate_and_validate() {
        let c = Check::le(1e-9, 1e-6);
        assert!(c.pass);
        let report = Json::obj(vec![
            ("gate", c.to_json()),
            ("verdicts", Json::obj(vec![("thing", Json::str("pass"))])),
            ("overall", Json::str("pass")),
        ])
        .render();
        let outcome = check_report(&report).unwrap();
        assert_eq!(outcome.checks_seen, 1);
        assert!(outcome.consistent());

        let lying = report.replace("\"pass\": true", "\"pass\": false");
        let outcome = check_report(&lying).unwrap();
        assert!(!outcome.consistent());
    }

    #[test]
    fn strip_key_removes_timings() {
        let report = Json::obj(vec![
            ("result", Json::Int(3)),
            ("timings", Json::obj(vec![("total", Json::Float(1.23))])),
        ])
        .render();
        let stripped = strip_key_and_rerender(&report, "timings").unwrap();
        assert!(!stripped.contains("timings"));
        assert!(stripped.contains("result"));
    }
}
