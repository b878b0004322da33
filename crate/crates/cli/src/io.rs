//! Artifact writing and solution CSV reading.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fracvar::{Grid, GridFunction};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::CliError;

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn input_err(path: &Path, reason: impl Into<String>) -> CliError {
    CliError::Input {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// `payload` with the resolved config and seed attached.
pub fn with_context(cfg: &RunConfig, payload: impl Serialize) -> Result<Value, CliError> {
    let mut map = match serde_json::to_value(payload).map_err(|e| CliError::Io(e.to_string()))? {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    };
    map.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    map.insert("seed".into(), cfg.solver.seed.into());
    Ok(Value::Object(map))
}

pub fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

pub fn write_json(cfg: &RunConfig, name: &str, payload: impl Serialize) -> Result<PathBuf, CliError> {
    let path = out_dir(cfg)?.join(name);
    let value = with_context(cfg, payload)?;
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| io_err(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Comment preamble carrying the seed and config; readers skip `#` lines.
fn csv_preamble(cfg: &RunConfig) -> String {
    let config = serde_json::to_string(cfg).expect("config serializes");
    format!("# seed: {}\n# config: {config}\n", cfg.solver.seed)
}

pub fn write_csv(cfg: &RunConfig, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf, CliError> {
    let path = out_dir(cfg)?.join(name);
    let mut buf = csv_preamble(cfg).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).map_err(|e| io_err(&path, e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
    }
    fs::write(&path, buf).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn coord_headers(dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("x{k}")).collect()
}

/// `node_index, x1[, x2], value`.
pub fn solution_rows(u: &GridFunction<f64>) -> (Vec<String>, Vec<Vec<String>>) {
    let grid = u.grid();
    let mut header = vec!["node_index".to_string()];
    header.extend(coord_headers(grid.dim()));
    header.push("value".into());
    let rows = grid
        .nodes()
        .zip(u.values())
        .enumerate()
        .map(|(i, (x, v))| {
            let mut row = vec![i.to_string()];
            row.extend(x.iter().map(|c| c.to_string()));
            row.push(v.to_string());
            row
        })
        .collect();
    (header, rows)
}

/// Reads a solution-schema CSV onto `grid`; nodes must match the grid's to `1e-9 h`.
pub fn read_grid_function(path: &Path, grid: &Arc<Grid<f64>>) -> Result<GridFunction<f64>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| input_err(path, e.to_string()))?;
    let dim = grid.dim();
    let mut expected = vec!["node_index".to_string()];
    expected.extend(coord_headers(dim));
    expected.push("value".into());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| input_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != expected {
        return Err(input_err(path, format!("header {header:?}, expected {expected:?}")));
    }
    let tol = 1e-9 * grid.spacing();
    let mut values = vec![None; grid.len()];
    for record in reader.records() {
        let record = record.map_err(|e| input_err(path, e.to_string()))?;
        let parse = |k: usize| -> Result<f64, CliError> {
            record[k]
                .parse::<f64>()
                .map_err(|e| input_err(path, format!("line {:?}: {e}", record.position().map(|p| p.line()))))
        };
        let idx: usize = record[0]
            .parse()
            .map_err(|e| input_err(path, format!("node_index {:?}: {e}", &record[0])))?;
        if idx >= grid.len() {
            return Err(input_err(path, format!("node_index {idx} outside grid of {} nodes", grid.len())));
        }
        for (k, &c) in grid.node(idx).iter().enumerate() {
            if (parse(k + 1)? - c).abs() > tol {
                return Err(input_err(path, format!("node {idx} does not match the grid")));
            }
        }
        let v = parse(dim + 1)?;
        if !v.is_finite() {
            return Err(input_err(path, format!("node {idx}: non-finite value")));
        }
        if values[idx].replace(v).is_some() {
            return Err(input_err(path, format!("node {idx} listed twice")));
        }
    }
    let missing = values.iter().filter(|v| v.is_none()).count();
    if missing > 0 {
        return Err(input_err(path, format!("{missing} of {} grid nodes missing", grid.len())));
    }
    GridFunction::new(grid.clone(), values.into_iter().map(Option::unwrap).collect()).map_err(CliError::from)
}
