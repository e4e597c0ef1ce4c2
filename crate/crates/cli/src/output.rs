//! Output documents. Floats carry 17 significant digits so every value
//! round-trips exactly.

use serde_json::Value;

pub const TOOL: &str = "rwdrift";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A command's result: a JSON body and, for tabular commands, CSV rows.
pub struct Report {
    pub result: Value,
    pub table: Option<Table>,
    /// Failed verification checks.
    pub breaches: Vec<String>,
}

impl Report {
    pub fn json(result: Value) -> Report {
        Report { result, table: None, breaches: Vec::new() }
    }
}

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    if x == 0.0 {
        return "0.0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..=15).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, x)
    } else {
        format!("{x:.16e}")
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("null".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) if n.is_f64() => Some(format_float(n.as_f64().expect("f64 number"))),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(serde_json::to_string(s).expect("string serializes")),
        _ => None,
    }
}

fn write_json(v: &Value, indent: usize, out: &mut String) {
    if let Some(s) = scalar(v) {
        out.push_str(&s);
        return;
    }
    let pad = "  ".repeat(indent + 1);
    match v {
        Value::Array(items) if items.iter().all(|x| scalar(x).is_some()) => {
            let parts: Vec<String> = items.iter().filter_map(scalar).collect();
            out.push('[');
            out.push_str(&parts.join(", "));
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                out.push_str(&pad);
                write_json(item, indent + 1, out);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            for (k, (key, item)) in map.iter().enumerate() {
                out.push_str(&pad);
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push_str(": ");
                write_json(item, indent + 1, out);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
        _ => unreachable!("scalars handled above"),
    }
}

pub fn to_json_string(v: &Value) -> String {
    let mut out = String::new();
    write_json(v, 0, &mut out);
    out.push('\n');
    out
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => format_float(n.as_f64().expect("f64 number")),
        Value::String(s) => s.clone(),
        other => scalar(other).unwrap_or_default(),
    }
}

/// CSV with the tool version and the config echo as leading `#` lines.
pub fn to_csv_string(table: &Table, config: &Value) -> String {
    let mut out = format!("# {TOOL} {VERSION}\n# config: {}\n", serde_json::to_string(config).expect("config serializes"));
    out.push_str(&table.header.join(","));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.iter().map(csv_cell).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn document(config: &Value, result: Value) -> Value {
    serde_json::json!({ "tool": TOOL, "version": VERSION, "config": config, "result": result })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(format_float(0.5), "0.50000000000000000");
        assert_eq!(format_float(0.549_306_144_334_054_8), "0.54930614433405478");
        assert_eq!(format_float(1e-20), "9.9999999999999995e-21");
        for x in [1.0 / 3.0, 2.0f64.sqrt() * 1e7, -7.25e-6, 1e300, 123.456] {
            assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn json_text_parses_back() {
        let v = serde_json::json!({"a": [1.0 / 3.0, 2], "b": {"c": [{"d": null}]}, "e": "x\"y"});
        let back: Value = serde_json::from_str(&to_json_string(&v)).unwrap();
        assert_eq!(back, v);
    }
}
