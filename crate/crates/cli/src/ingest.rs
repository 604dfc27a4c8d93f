//! CSV ingestion: unit table (+ optional edge list) into a `Dataset`, with
//! schema validation, the max-neighbors filter, summary diagnostics, and the
//! inverse export used for round-trip audits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use netrdd::data::Dataset;
use netrdd::graph::{
    interference_from_clusters, interference_from_network, InterferenceSets, Network,
};

use crate::config::{RunConfig, SchemaMap};
use crate::error::{CliError, Result};

pub struct Ingested {
    pub dataset: Dataset,
    pub ids: Vec<String>,
    /// Cluster/strata key columns in original order (name, values), kept for
    /// export.
    pub key_columns: Vec<(String, Vec<String>)>,
    /// Induced edge list when the interference structure came from a file.
    pub edges: Option<Vec<(u32, u32)>>,
    pub diagnostics: String,
}

struct RawRows {
    ids: Vec<String>,
    scores: Vec<f64>,
    outcomes: Vec<f64>,
    keys: Vec<(String, Vec<String>)>,
    treatment: Option<Vec<bool>>,
}

fn read_rows(path: &Path, schema: &SchemaMap) -> Result<RawRows> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Csv(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Schema(format!("column `{name}` not found in {}", path.display()))
        })
    };
    let id_col = col(&schema.id)?;
    let score_col = col(&schema.score)?;
    let outcome_col = col(&schema.outcome)?;
    let mut key_cols: Vec<(String, usize)> = Vec::new();
    if let Some(cluster) = &schema.cluster {
        key_cols.push((cluster.clone(), col(cluster)?));
        for s in &schema.strata {
            key_cols.push((s.clone(), col(s)?));
        }
    }
    let treat_col = schema.treatment.as_ref().map(|t| col(t)).transpose()?;

    let mut rows = RawRows {
        ids: Vec::new(),
        scores: Vec::new(),
        outcomes: Vec::new(),
        keys: key_cols.iter().map(|(n, _)| (n.clone(), Vec::new())).collect(),
        treatment: treat_col.map(|_| Vec::new()),
    };
    let mut seen = HashMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| CliError::Csv(format!("line {line}: {e}")))?;
        let field = |c: usize| record.get(c).unwrap_or("").trim().to_string();
        let id = field(id_col);
        if let Some(prev) = seen.insert(id.clone(), line) {
            return Err(CliError::Schema(format!(
                "duplicate id `{id}` on line {line} (first seen on line {prev})"
            )));
        }
        let number = |c: usize, name: &str| -> Result<f64> {
            let raw = field(c);
            let v: f64 = raw.parse().map_err(|_| {
                CliError::Schema(format!("line {line}: `{name}` value `{raw}` is not numeric"))
            })?;
            if !v.is_finite() {
                return Err(CliError::Schema(format!(
                    "line {line}: `{name}` value `{raw}` is not finite"
                )));
            }
            Ok(v)
        };
        rows.ids.push(id);
        rows.scores.push(number(score_col, &schema.score)?);
        rows.outcomes.push(number(outcome_col, &schema.outcome)?);
        for ((_, values), (_, c)) in rows.keys.iter_mut().zip(&key_cols) {
            values.push(field(*c));
        }
        if let (Some(ts), Some(c)) = (&mut rows.treatment, treat_col) {
            let raw = field(c);
            let t = match raw.as_str() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(CliError::Schema(format!(
                        "line {line}: treatment value `{other}` must be 0 or 1"
                    )))
                }
            };
            ts.push(t);
        }
    }
    if rows.ids.is_empty() {
        return Err(CliError::Schema(format!("{} has no data rows", path.display())));
    }
    Ok(rows)
}

fn read_edges(path: &Path, index: &HashMap<String, u32>) -> Result<Vec<(u32, u32)>> {
    let text = std::fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(CliError::Schema(format!(
                    "{}: line {line_no}: expected `i j`, got `{trimmed}`",
                    path.display()
                )))
            }
        };
        let resolve = |token: &str| -> Result<u32> {
            index.get(token).copied().ok_or_else(|| {
                CliError::Schema(format!(
                    "{}: line {line_no}: edge references unknown id `{token}`",
                    path.display()
                ))
            })
        };
        edges.push((resolve(a)?, resolve(b)?));
    }
    Ok(edges)
}

type EdgeList = Vec<(u32, u32)>;

fn build_sets(
    rows: &RawRows,
    edges: Option<&[(u32, u32)]>,
) -> Result<(InterferenceSets, Option<EdgeList>)> {
    match edges {
        Some(edges) => {
            let net = Network::from_edges(rows.ids.len(), edges)
                .map_err(|e| CliError::Schema(e.to_string()))?;
            Ok((interference_from_network(&net), Some(net.edges())))
        }
        None => {
            if rows.keys.is_empty() {
                return Err(CliError::Schema(
                    "no interference structure: provide a cluster column or an edge list".into(),
                ));
            }
            let labels = &rows.keys[0].1;
            let strata: Vec<Vec<String>> =
                rows.keys[1..].iter().map(|(_, v)| v.clone()).collect();
            let sets = interference_from_clusters(labels, &strata)
                .map_err(|e| CliError::Schema(e.to_string()))?;
            Ok((sets, None))
        }
    }
}

/// Reads the unit table (and edge list, when given), derives interference
/// sets, applies the max-neighbors filter, validates any treatment override
/// column, and assembles the dataset.
pub fn ingest(
    data_path: &Path,
    edges_path: Option<&Path>,
    cfg: &RunConfig,
) -> Result<Ingested> {
    let mut rows = read_rows(data_path, &cfg.schema)?;
    let index: HashMap<String, u32> =
        rows.ids.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect();
    let file_edges = edges_path.map(|p| read_edges(p, &index)).transpose()?;
    let (mut sets, mut edges) = build_sets(&rows, file_edges.as_deref())?;

    let mut diagnostics = String::new();
    let total = rows.ids.len();
    let _ = writeln!(diagnostics, "rows: {total}");

    // max-neighbors filter: drop units with too-large interference sets and
    // rebuild the structure on the induced subsample (single pass)
    if let Some(cap) = cfg.max_neighbors {
        let keep: Vec<usize> = (0..total).filter(|&i| sets.size(i) <= cap).collect();
        if keep.len() < total {
            let remap: HashMap<usize, u32> =
                keep.iter().enumerate().map(|(new, &old)| (old, new as u32)).collect();
            rows.ids = keep.iter().map(|&i| rows.ids[i].clone()).collect();
            rows.scores = keep.iter().map(|&i| rows.scores[i]).collect();
            rows.outcomes = keep.iter().map(|&i| rows.outcomes[i]).collect();
            for (_, values) in &mut rows.keys {
                *values = keep.iter().map(|&i| values[i].clone()).collect();
            }
            if let Some(ts) = &mut rows.treatment {
                *ts = keep.iter().map(|&i| ts[i]).collect();
            }
            let induced = edges.as_ref().map(|es| {
                es.iter()
                    .filter_map(|&(a, b)| {
                        match (remap.get(&(a as usize)), remap.get(&(b as usize))) {
                            (Some(&na), Some(&nb)) => Some((na, nb)),
                            _ => None,
                        }
                    })
                    .collect::<Vec<_>>()
            });
            (sets, edges) = build_sets(&rows, induced.as_deref())?;
            let _ = writeln!(
                diagnostics,
                "max-neighbors filter (|S_i| <= {cap}): {total} -> {}",
                keep.len()
            );
        }
    }

    // treatment override column must agree with the sharp rule
    if let Some(ts) = &rows.treatment {
        for (i, &t) in ts.iter().enumerate() {
            let implied = rows.scores[i] >= cfg.cutoff;
            if t != implied {
                return Err(CliError::Schema(format!(
                    "treatment column contradicts 1(score >= cutoff) for id `{}` \
                     (sharp designs only)",
                    rows.ids[i]
                )));
            }
        }
    }

    let _ = writeln!(diagnostics, "isolated units (|S_i| = 0): {}", sets.isolated_count());
    let hist = sets.size_histogram();
    let hist_line: Vec<String> =
        hist.iter().map(|(size, count)| format!("{size}:{count}")).collect();
    let _ = writeln!(diagnostics, "|S_i| histogram: {}", hist_line.join(" "));

    let clusters = if rows.keys.is_empty() {
        None
    } else {
        // compact composite keys to dense ids
        let mut compact: HashMap<Vec<&String>, u32> = HashMap::new();
        let mut labels = Vec::with_capacity(rows.ids.len());
        for i in 0..rows.ids.len() {
            let key: Vec<&String> = rows.keys.iter().map(|(_, v)| &v[i]).collect();
            let next = compact.len() as u32;
            labels.push(*compact.entry(key).or_insert(next));
        }
        Some(labels)
    };

    let dataset = Dataset::new(
        rows.scores.clone(),
        rows.outcomes.clone(),
        cfg.cutoff,
        sets,
        cfg.exposure()?,
        clusters,
    )?;

    Ok(Ingested {
        dataset,
        ids: rows.ids,
        key_columns: rows.keys,
        edges,
        diagnostics,
    })
}

/// Writes the unit table (and edge list when present) so that re-ingesting
/// reproduces the dataset exactly. Returns the written paths.
pub fn export(ing: &Ingested, cfg: &RunConfig, prefix: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::new();
    let mut csv_text = String::new();
    let mut header = vec![cfg.schema.id.clone(), cfg.schema.score.clone(), cfg.schema.outcome.clone()];
    for (name, _) in &ing.key_columns {
        header.push(name.clone());
    }
    csv_text.push_str(&header.join(","));
    csv_text.push('\n');
    for i in 0..ing.ids.len() {
        let mut row = vec![
            ing.ids[i].clone(),
            format!("{}", ing.dataset.scores[i]),
            format!("{}", ing.dataset.outcomes[i]),
        ];
        for (_, values) in &ing.key_columns {
            row.push(values[i].clone());
        }
        csv_text.push_str(&row.join(","));
        csv_text.push('\n');
    }
    let data_path = prefix.with_extension("units.csv");
    crate::write_atomic(&data_path, csv_text.as_bytes())?;
    written.push(data_path);

    if let Some(edges) = &ing.edges {
        let mut text = String::new();
        for &(a, b) in edges {
            let _ = writeln!(text, "{} {}", ing.ids[a as usize], ing.ids[b as usize]);
        }
        let edge_path = prefix.with_extension("edges.txt");
        crate::write_atomic(&edge_path, text.as_bytes())?;
        written.push(edge_path);
    }
    Ok(written)
}
