//! Canonical JSON text: sorted keys, two-space indentation, floats with 17
//! significant digits, non-finite floats as `null`.

use std::fmt::Write;

use serde::Serialize;
use serde_json::Value;

pub fn to_string<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(value_to_string(&v))
}

pub fn value_to_string(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

/// `{:.16e}`, or `null` when not finite.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, v: &Value, level: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else {
                out.push_str(&format_f64(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            let scalar = items.iter().all(|i| !matches!(i, Value::Array(_) | Value::Object(_)));
            if items.is_empty() {
                out.push_str("[]");
            } else if scalar {
                out.push('[');
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, item, level);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (k, item) in items.iter().enumerate() {
                    indent(out, level + 1);
                    write_value(out, item, level + 1);
                    if k + 1 < items.len() {
                        out.push(',');
                    }
                    out.push('\n');
                }
                indent(out, level);
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push_str(": ");
                write_value(out, &map[key.as_str()], level + 1);
                if k + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(out, level);
            out.push('}');
        }
    }
}
