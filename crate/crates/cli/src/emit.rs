//! Report files: `<command>-<hash>.<ext>`, each embedding the configuration,
//! the named and estimated constants, and a provenance category per number.

use adalb::lb_verifier::certificate::named_constants;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::commands::{Output, Table};
use crate::config::{Command, Format, RunConfig};
use crate::CliError;

/// Hex digits of the configuration hash kept in file names.
const HASH_CHARS: usize = 16;

pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))[..HASH_CHARS].to_string()
}

/// Category of every numeric leaf; array indices collapse to `[]`.
pub fn provenance_map(report: &Value, rules: &[(String, &'static str)]) -> BTreeMap<String, &'static str> {
    fn walk(v: &Value, path: &str, rules: &[(String, &'static str)], out: &mut BTreeMap<String, &'static str>) {
        match v {
            Value::Number(_) => {
                let cat = rules
                    .iter()
                    .filter(|(p, _)| p.is_empty() || path == p || path.starts_with(&format!("{p}.")) || path.starts_with(&format!("{p}[]")))
                    .max_by_key(|(p, _)| p.len())
                    .map(|(_, c)| *c)
                    .unwrap_or(crate::commands::CLOSED_FORM);
                out.insert(path.to_string(), cat);
            }
            Value::Array(a) => {
                for x in a {
                    walk(x, &format!("{path}[]"), rules, out);
                }
            }
            Value::Object(o) => {
                for (k, x) in o {
                    let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    walk(x, &p, rules, out);
                }
            }
            _ => {}
        }
    }
    let mut out = BTreeMap::new();
    walk(report, "", rules, &mut out);
    out
}

fn constants_block(out: &Output) -> Value {
    json!({ "named": serde_json::to_value(named_constants()).expect("constants serialize"), "estimated": out.constants })
}

pub fn envelope(cfg: &RunConfig, out: &Output) -> Value {
    let mut m = Map::new();
    m.insert("tool".into(), json!(concat!("adalb ", env!("CARGO_PKG_VERSION"))));
    m.insert("command".into(), json!(cfg.command().name()));
    m.insert("config_hash".into(), json!(config_hash(cfg)));
    m.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    m.insert("constants".into(), constants_block(out));
    m.insert("status".into(), json!(if out.pass { "pass" } else { "check-failed" }));
    m.insert("report".into(), out.report.clone());
    m.insert("provenance".into(), json!(provenance_map(&out.report, &out.provenance)));
    Value::Object(m)
}

fn csv_text(cfg: &RunConfig, out: &Output, t: &Table) -> String {
    let prov: Map<String, Value> = t.columns.iter().map(|(c, p)| (c.to_string(), json!(p))).collect();
    let mut s = String::new();
    s.push_str(&format!("# config: {}\n", serde_json::to_string(cfg).expect("config serializes")));
    s.push_str(&format!("# constants: {}\n", constants_block(out)));
    s.push_str(&format!("# provenance: {}\n", Value::Object(prov)));
    s.push_str(&t.columns.iter().map(|(c, _)| *c).collect::<Vec<_>>().join(","));
    s.push('\n');
    for r in &t.rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Renders every output file, then writes them all; nothing is written on a render error.
pub fn emit(cfg: &RunConfig, out: &Output) -> Result<Vec<PathBuf>, CliError> {
    let stem = format!("{}-{}", cfg.command().name(), config_hash(cfg));
    let mut files: Vec<(String, String)> = Vec::new();
    let format = cfg.format.unwrap_or_default();
    if format == Format::Json {
        let text = serde_json::to_string_pretty(&envelope(cfg, out)).expect("report serializes");
        files.push((format!("{stem}.json"), text + "\n"));
    }
    // Plot data for the sweep is written in either format.
    if format == Format::Csv || cfg.command() == Command::Sweep {
        for t in &out.tables {
            let name = if t.suffix.is_empty() { format!("{stem}.csv") } else { format!("{stem}-{}.csv", t.suffix) };
            files.push((name, csv_text(cfg, out, t)));
        }
    }
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut paths = Vec::with_capacity(files.len());
    for (name, text) in files {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
        paths.push(p);
    }
    Ok(paths)
}
