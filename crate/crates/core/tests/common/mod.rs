#![allow(dead_code)]

use std::path::PathBuf;

use bubbly::boundary::{make_dimer, BoundaryBasis};
use bubbly::lattice::{Lattice, LatticeKind};
use bubbly::operators::Material;
use serde_json::Value;

pub fn setup(kind: LatticeKind) -> (Lattice, BoundaryBasis, Material) {
    let lat = Lattice::new(kind, 1.0).unwrap();
    let (_, basis) = make_dimer(&lat, 0.2, 6, 64).unwrap();
    (lat, basis, Material::default())
}

pub fn honeycomb() -> (Lattice, BoundaryBasis, Material) {
    setup(LatticeKind::Honeycomb)
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn schema(name: &str) -> Value {
    let path = workspace_root().join("schemas").join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn type_matches(t: &str, v: &Value) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.as_u64().is_some() || v.as_i64().is_some(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => false,
    }
}

/// Checks the schema keywords used by the published schemas: `type`,
/// `required`, `properties`, `items`, `const`, `enum`, `minItems`,
/// `maxItems`, `minimum`. Returns the offending paths.
pub fn validate(schema: &Value, v: &Value, path: &str, errors: &mut Vec<String>) {
    if let Some(t) = schema.get("type") {
        let ok = match t {
            Value::String(s) => type_matches(s, v),
            Value::Array(ts) => ts.iter().any(|t| type_matches(t.as_str().unwrap(), v)),
            _ => true,
        };
        if !ok {
            errors.push(format!("{path}: expected type {t}, found {v}"));
            return;
        }
    }
    if let Some(c) = schema.get("const") {
        if c != v {
            errors.push(format!("{path}: expected {c}, found {v}"));
        }
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(v) {
            errors.push(format!("{path}: {v} not in {options:?}"));
        }
    }
    if let (Some(min), Some(x)) = (schema.get("minimum").and_then(Value::as_f64), v.as_f64()) {
        if x < min {
            errors.push(format!("{path}: {x} < {min}"));
        }
    }
    if let Value::Object(obj) = v {
        if let Some(Value::Array(req)) = schema.get("required") {
            for r in req {
                if !obj.contains_key(r.as_str().unwrap()) {
                    errors.push(format!("{path}: missing {r}"));
                }
            }
        }
        if let Some(Value::Object(props)) = schema.get("properties") {
            for (k, sub) in props {
                if let Some(x) = obj.get(k) {
                    validate(sub, x, &format!("{path}.{k}"), errors);
                }
            }
        }
    }
    if let Value::Array(items) = v {
        if let Some(n) = schema.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < n {
                errors.push(format!("{path}: fewer than {n} items"));
            }
        }
        if let Some(n) = schema.get("maxItems").and_then(Value::as_u64) {
            if (items.len() as u64) > n {
                errors.push(format!("{path}: more than {n} items"));
            }
        }
        if let Some(sub) = schema.get("items") {
            for (i, x) in items.iter().enumerate() {
                validate(sub, x, &format!("{path}[{i}]"), errors);
            }
        }
    }
}

pub fn assert_schema(name: &str, v: &Value) {
    let mut errors = Vec::new();
    validate(&schema(name), v, "$", &mut errors);
    assert!(errors.is_empty(), "{name} schema violations: {errors:#?}");
}

/// Relative closeness `|a - b| <= tol * max(|a|, |b|)`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
