//! Helpers shared by the integration tests of this crate.
#![allow(dead_code)]

use serde_json::Value;

/// Validates `doc` against the subset of JSON Schema used by
/// `schema/report.schema.json`. Returns the path of the first violation.
pub fn validate(schema: &Value, doc: &Value) -> Result<(), String> {
    check(schema, schema, doc, "$")
}

fn resolve<'a>(root: &'a Value, node: &'a Value) -> &'a Value {
    match node.get("$ref").and_then(Value::as_str) {
        Some(r) => {
            let ptr = r.strip_prefix('#').expect("only local references");
            root.pointer(ptr).expect("dangling reference")
        }
        None => node,
    }
}

fn type_ok(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64() || v.as_f64().is_some_and(|x| x.fract() == 0.0),
        other => panic!("unsupported type {other}"),
    }
}

fn check(root: &Value, node: &Value, v: &Value, at: &str) -> Result<(), String> {
    let node = resolve(root, node);
    let fail = |what: &str| Err(format!("{at}: {what}"));
    if let Some(ty) = node.get("type").and_then(Value::as_str) {
        if !type_ok(ty, v) {
            return fail(&format!("expected {ty}"));
        }
    }
    if let Some(c) = node.get("const") {
        if c != v {
            return fail(&format!("expected {c}"));
        }
    }
    if let Some(options) = node.get("enum").and_then(Value::as_array) {
        if !options.contains(v) {
            return fail("not one of the allowed values");
        }
    }
    if let Some(x) = v.as_f64() {
        if node.get("minimum").and_then(Value::as_f64).is_some_and(|m| x < m) {
            return fail("below minimum");
        }
        if node.get("maximum").and_then(Value::as_f64).is_some_and(|m| x > m) {
            return fail("above maximum");
        }
        if node.get("exclusiveMinimum").and_then(Value::as_f64).is_some_and(|m| x <= m) {
            return fail("not above exclusive minimum");
        }
    }
    if let Some(options) = node.get("oneOf").and_then(Value::as_array) {
        let hits = options.iter().filter(|o| check(root, o, v, at).is_ok()).count();
        if hits != 1 {
            return fail(&format!("matches {hits} alternatives of oneOf"));
        }
    }
    if let Some(obj) = v.as_object() {
        for key in node.get("required").and_then(Value::as_array).into_iter().flatten() {
            if !obj.contains_key(key.as_str().unwrap()) {
                return fail(&format!("missing {key}"));
            }
        }
        let props = node.get("properties").and_then(Value::as_object);
        for (key, value) in obj {
            match props.and_then(|p| p.get(key)) {
                Some(sub) => check(root, sub, value, &format!("{at}.{key}"))?,
                None if node.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return fail(&format!("unexpected property {key}"))
                }
                None => {}
            }
        }
    }
    if let Some(items) = v.as_array() {
        if node.get("minItems").and_then(Value::as_u64).is_some_and(|m| (items.len() as u64) < m) {
            return fail("too few items");
        }
        if let Some(sub) = node.get("items") {
            for (i, item) in items.iter().enumerate() {
                check(root, sub, item, &format!("{at}[{i}]"))?;
            }
        }
    }
    Ok(())
}

pub fn report_schema() -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/schema/report.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
