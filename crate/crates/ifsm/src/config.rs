//! JSON system definitions.
//!
//! Schema (version 1):
//!
//! ```json
//! {
//!   "version": 1,
//!   "domain": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
//!   "apriori": [0.25, 0.25, 0.25, 0.25],
//!   "maps": [
//!     { "label": "A", "matrix": [[0.5, 0.0], [0.0, 0.5]], "offset": [0.0, 0.0] },
//!     { "label": "B", "exprs": ["x/2 + 0.5", "y/2"] }
//!   ],
//!   "weighting": { "potential": "exp(x)" }
//! }
//! ```
//!
//! `weighting` is either `{"potential": "<expr>"}` or
//! `{"density": ["<expr per map>", ...]}`. Dimension is inferred from the
//! bound arrays. Loading validates the system on a default grid and fails
//! with the offending document path on schema errors.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::expr::{parse_expression, ExpressionAst};
use crate::model::{
    AffineMap, DensityFamily, DomainBox, MapFamily, ParameterSet, Potential, SystemSpec, Weighting,
};

/// Per-axis grid resolution of the automatic validation pass.
pub const DEFAULT_VALIDATION_RESOLUTION: usize = 64;

fn schema_err(path: &str, message: impl Into<String>) -> Error {
    Error::SchemaError {
        path: path.to_string(),
        message: message.into(),
    }
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a serde_json::Map<String, Value>> {
    v.as_object().ok_or_else(|| schema_err(path, "expected an object"))
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| schema_err(path, "expected an array"))
}

fn as_number(v: &Value, path: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| schema_err(path, "expected a number"))
}

fn as_string<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| schema_err(path, "expected a string"))
}

fn get<'a>(obj: &'a serde_json::Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| schema_err(path, format!("missing field `{key}`")))
}

fn number_array(v: &Value, path: &str) -> Result<Vec<f64>> {
    as_array(v, path)?
        .iter()
        .enumerate()
        .map(|(i, x)| as_number(x, &format!("{path}[{i}]")))
        .collect()
}

fn parse_expr_at(text: &str, dim: usize, path: &str) -> Result<ExpressionAst> {
    let ast = parse_expression(text).map_err(|e| schema_err(path, e.to_string()))?;
    if let Some(axis) = ast.max_axis() {
        if axis >= dim {
            return Err(schema_err(
                path,
                format!("`{text}` uses `y` in a {dim}-dimensional system"),
            ));
        }
    }
    Ok(ast)
}

/// Parses and validates a system definition from a JSON string.
pub fn load_config_str(text: &str) -> Result<SystemSpec> {
    let spec = parse_config_str(text)?;
    spec.validate(DEFAULT_VALIDATION_RESOLUTION)?;
    Ok(spec)
}

/// Parses a system definition without the validation pass.
pub fn parse_config_str(text: &str) -> Result<SystemSpec> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| schema_err("$", format!("invalid JSON: {e}")))?;
    let obj = as_object(&root, "$")?;

    if let Some(v) = obj.get("version") {
        let version = as_number(v, "version")?;
        if version != 1.0 {
            return Err(schema_err("version", format!("unsupported version {version}")));
        }
    }

    let domain_obj = as_object(get(obj, "domain", "$")?, "domain")?;
    let lower = number_array(get(domain_obj, "lower", "domain")?, "domain.lower")?;
    let upper = number_array(get(domain_obj, "upper", "domain")?, "domain.upper")?;
    let domain =
        DomainBox::new(&lower, &upper).map_err(|e| schema_err("domain", e.to_string()))?;
    let dim = domain.dim();

    let apriori = number_array(get(obj, "apriori", "$")?, "apriori")?;
    for (i, w) in apriori.iter().enumerate() {
        if *w < 0.0 {
            return Err(schema_err(
                &format!("apriori[{i}]"),
                format!("negative weight {w}"),
            ));
        }
    }

    let maps_json = as_array(get(obj, "maps", "$")?, "maps")?;
    if maps_json.is_empty() {
        return Err(schema_err("maps", "at least one map is required"));
    }
    if maps_json.len() != apriori.len() {
        return Err(schema_err(
            "apriori",
            format!("{} weights for {} maps", apriori.len(), maps_json.len()),
        ));
    }

    let mut labels = Vec::with_capacity(maps_json.len());
    let mut affine: Vec<AffineMap> = Vec::new();
    let mut exprs: Vec<Vec<ExpressionAst>> = Vec::new();
    for (i, entry) in maps_json.iter().enumerate() {
        let path = format!("maps[{i}]");
        let map_obj = as_object(entry, &path)?;
        let label = as_string(get(map_obj, "label", &path)?, &format!("{path}.label"))?;
        if labels.iter().any(|l: &String| l == label) {
            return Err(schema_err(
                &format!("{path}.label"),
                format!("duplicate label `{label}`"),
            ));
        }
        labels.push(label.to_string());
        match (map_obj.get("matrix"), map_obj.get("exprs")) {
            (Some(matrix_json), None) => {
                if !exprs.is_empty() {
                    return Err(schema_err(&path, "cannot mix affine and expression maps"));
                }
                let rows = as_array(matrix_json, &format!("{path}.matrix"))?;
                if rows.len() != dim {
                    return Err(schema_err(
                        &format!("{path}.matrix"),
                        format!("{} rows for dimension {dim}", rows.len()),
                    ));
                }
                let mut matrix = [[0.0f64; 2]; 2];
                for (r, row) in rows.iter().enumerate() {
                    let row_path = format!("{path}.matrix[{r}]");
                    let cells = number_array(row, &row_path)?;
                    if cells.len() != dim {
                        return Err(schema_err(
                            &row_path,
                            format!("{} columns for dimension {dim}", cells.len()),
                        ));
                    }
                    matrix[r][..dim].copy_from_slice(&cells);
                }
                let offset_vals =
                    number_array(get(map_obj, "offset", &path)?, &format!("{path}.offset"))?;
                if offset_vals.len() != dim {
                    return Err(schema_err(
                        &format!("{path}.offset"),
                        format!("{} entries for dimension {dim}", offset_vals.len()),
                    ));
                }
                let mut offset = [0.0f64; 2];
                offset[..dim].copy_from_slice(&offset_vals);
                affine.push(AffineMap::new_2d(matrix, offset));
            }
            (None, Some(exprs_json)) => {
                if !affine.is_empty() {
                    return Err(schema_err(&path, "cannot mix affine and expression maps"));
                }
                let list = as_array(exprs_json, &format!("{path}.exprs"))?;
                if list.len() != dim {
                    return Err(schema_err(
                        &format!("{path}.exprs"),
                        format!("{} coordinate expressions for dimension {dim}", list.len()),
                    ));
                }
                let mut per_axis = Vec::with_capacity(dim);
                for (a, e) in list.iter().enumerate() {
                    let p = format!("{path}.exprs[{a}]");
                    per_axis.push(parse_expr_at(as_string(e, &p)?, dim, &p)?);
                }
                exprs.push(per_axis);
            }
            _ => {
                return Err(schema_err(
                    &path,
                    "map needs either `matrix`+`offset` or `exprs`",
                ))
            }
        }
    }
    let maps = if affine.is_empty() {
        MapFamily::Exprs(exprs)
    } else {
        MapFamily::Affine(affine)
    };

    let weighting_obj = as_object(get(obj, "weighting", "$")?, "weighting")?;
    let weighting = match (weighting_obj.get("potential"), weighting_obj.get("density")) {
        (Some(p), None) => {
            let text = as_string(p, "weighting.potential")?;
            Weighting::Potential(Potential::Expr(parse_expr_at(
                text,
                dim,
                "weighting.potential",
            )?))
        }
        (None, Some(d)) => {
            let list = as_array(d, "weighting.density")?;
            if list.len() != labels.len() {
                return Err(schema_err(
                    "weighting.density",
                    format!("{} densities for {} maps", list.len(), labels.len()),
                ));
            }
            let mut parsed = Vec::with_capacity(list.len());
            for (i, e) in list.iter().enumerate() {
                let p = format!("weighting.density[{i}]");
                parsed.push(parse_expr_at(as_string(e, &p)?, dim, &p)?);
            }
            Weighting::Density(DensityFamily::Expr(parsed))
        }
        _ => {
            return Err(schema_err(
                "weighting",
                "exactly one of `potential` or `density` is required",
            ))
        }
    };

    let params =
        ParameterSet::new(labels, apriori).map_err(|e| schema_err("apriori", e.to_string()))?;
    SystemSpec::new(domain, params, maps, weighting)
        .map_err(|e| schema_err("$", e.to_string()))
}

/// Loads and validates a system definition file.
pub fn load_config(path: impl AsRef<Path>) -> Result<SystemSpec> {
    let text = std::fs::read_to_string(path)?;
    load_config_str(&text)
}

/// Serializes an expression-backed system back to the schema. Tabulated
/// weightings (products of [`crate::spectral::normalize_system`]) have no
/// serialized form.
pub fn spec_to_json(spec: &SystemSpec) -> Result<Value> {
    let dim = spec.dim();
    let domain = spec.domain();
    let lower: Vec<f64> = (0..dim).map(|a| domain.lower(a)).collect();
    let upper: Vec<f64> = (0..dim).map(|a| domain.upper(a)).collect();

    let maps: Vec<Value> = match spec.maps() {
        MapFamily::Affine(maps) => maps
            .iter()
            .zip(spec.params().labels())
            .map(|(m, label)| {
                let matrix: Vec<Vec<f64>> = (0..dim)
                    .map(|r| (0..dim).map(|c| m.matrix()[r][c]).collect())
                    .collect();
                let offset: Vec<f64> = (0..dim).map(|a| m.offset()[a]).collect();
                serde_json::json!({ "label": label, "matrix": matrix, "offset": offset })
            })
            .collect(),
        MapFamily::Exprs(exprs) => exprs
            .iter()
            .zip(spec.params().labels())
            .map(|(per_axis, label)| {
                let texts: Vec<String> = per_axis.iter().map(|e| e.to_string()).collect();
                serde_json::json!({ "label": label, "exprs": texts })
            })
            .collect(),
    };

    let weighting = match spec.weighting() {
        Weighting::Potential(Potential::Expr(e)) => {
            serde_json::json!({ "potential": e.to_string() })
        }
        Weighting::Density(DensityFamily::Expr(exprs)) => {
            let texts: Vec<String> = exprs.iter().map(|e| e.to_string()).collect();
            serde_json::json!({ "density": texts })
        }
        _ => {
            return Err(Error::Invalid(
                "tabulated weightings have no serialized form".into(),
            ))
        }
    };

    Ok(serde_json::json!({
        "version": 1,
        "domain": { "lower": lower, "upper": upper },
        "apriori": spec.params().weights(),
        "maps": maps,
        "weighting": weighting,
    }))
}

/// Writes a system definition file.
pub fn write_config(path: impl AsRef<Path>, spec: &SystemSpec) -> Result<()> {
    let json = spec_to_json(spec)?;
    std::fs::write(path, serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

/// Constant-probability four-map config on the unit square from observed
/// symbol frequencies, in label order A, B, C, D.
///
/// The a-priori measure is uniform and the densities are `4·p_θ`, so a
/// branch is picked with probability `p_θ` and entropy reports are taken
/// relative to the uniform measure.
pub fn frequency_config(frequencies: [f64; 4]) -> Value {
    let density: Vec<String> = frequencies.iter().map(|p| format!("{}", 4.0 * p)).collect();
    serde_json::json!({
        "version": 1,
        "domain": { "lower": [0.0, 0.0], "upper": [1.0, 1.0] },
        "apriori": [0.25, 0.25, 0.25, 0.25],
        "maps": [
            { "label": "A", "matrix": [[0.5, 0.0], [0.0, 0.5]], "offset": [0.0, 0.0] },
            { "label": "B", "matrix": [[0.5, 0.0], [0.0, 0.5]], "offset": [0.5, 0.0] },
            { "label": "C", "matrix": [[0.5, 0.0], [0.0, 0.5]], "offset": [0.0, 0.5] },
            { "label": "D", "matrix": [[0.5, 0.0], [0.0, 0.5]], "offset": [0.5, 0.5] },
        ],
        "weighting": { "density": density },
    })
}
