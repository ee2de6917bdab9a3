//! CSV and JSON file formats.
//!
//! Datasets are written with one row per event and the header
//! `feature_0,...,feature_{d-1},label,domain,window_seconds`. Reals use
//! scientific notation with nine significant digits, so a written file
//! read back and rewritten is byte-identical.
//!
//! Event files start with an `event_id,furnace_id,start_time` header and
//! its value row, followed by a `t,pressure` header and one row per second.
//!
//! Weight files are `index,weight` CSVs with a JSON sidecar holding the
//! solver settings and outcome.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_dataset, Dataset, PumpingEvent, WeightVector};

/// Formats a real with nine significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.8e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("line {line}: bad {name} `{s}`")))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

pub fn write_dataset_to<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    let d = ds.n_features();
    let header: Vec<String> = (0..d)
        .map(|j| format!("feature_{j}"))
        .chain(["label".into(), "domain".into(), "window_seconds".into()])
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (row, label) in ds.features.rows().into_iter().zip(ds.labels.iter()) {
        for v in row {
            write!(out, "{},", fmt_real(*v))?;
        }
        writeln!(
            out,
            "{},{},{}",
            fmt_real(*label),
            ds.domain,
            ds.window_seconds
        )?;
    }
    out.flush()
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let out = create(path)?;
    write_dataset_to(ds, out).map_err(|e| Error::io(path, e))
}

/// Reads and validates a dataset CSV.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut rdr = open_csv(path)?;
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_err(path, e))?,
        None => return Err(Error::parse(path, "empty file")),
    };
    let ncols = header.len();
    if ncols < 3
        || &header[ncols - 3] != "label"
        || &header[ncols - 2] != "domain"
        || &header[ncols - 1] != "window_seconds"
    {
        return Err(Error::parse(
            path,
            "header must end with label,domain,window_seconds",
        ));
    }
    let d = ncols - 3;
    for (j, name) in header.iter().take(d).enumerate() {
        if name != format!("feature_{j}") {
            return Err(Error::parse(path, format!("unexpected column `{name}`")));
        }
    }

    let mut flat = Vec::new();
    let mut labels = Vec::new();
    let mut domain: Option<String> = None;
    let mut window: Option<usize> = None;
    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        if rec.len() != ncols {
            return Err(Error::parse(
                path,
                format!("line {line}: expected {ncols} fields, found {}", rec.len()),
            ));
        }
        for j in 0..d {
            flat.push(parse_field::<f64>(path, line, "feature", &rec[j])?);
        }
        labels.push(parse_field::<f64>(path, line, "label", &rec[d])?);
        let dom = rec[d + 1].to_string();
        let win = parse_field::<usize>(path, line, "window_seconds", &rec[d + 2])?;
        if domain.get_or_insert_with(|| dom.clone()) != &dom {
            return Err(Error::parse(path, format!("line {line}: mixed domains")));
        }
        if *window.get_or_insert(win) != win {
            return Err(Error::parse(path, format!("line {line}: mixed windows")));
        }
    }
    let n = labels.len();
    let ds = Dataset {
        features: Array2::from_shape_vec((n, d), flat)
            .map_err(|e| Error::parse(path, e.to_string()))?,
        labels: Array1::from(labels),
        domain: domain.unwrap_or_default(),
        window_seconds: window.unwrap_or_default(),
    };
    validate_dataset(&ds)?;
    Ok(ds)
}

pub fn write_event(ev: &PumpingEvent, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let res = (|| -> std::io::Result<()> {
        writeln!(out, "event_id,furnace_id,start_time")?;
        writeln!(out, "{},{},{}", ev.event_id, ev.furnace_id, ev.start_time)?;
        writeln!(out, "t,pressure")?;
        for (t, p) in ev.pressure.iter().enumerate() {
            writeln!(out, "{t},{}", fmt_real(*p))?;
        }
        out.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn read_event(path: &Path) -> Result<PumpingEvent> {
    let mut rdr = open_csv(path)?;
    let rows: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_err(path, e))?;
    if rows.len() < 3
        || rows[0].iter().collect::<Vec<_>>() != ["event_id", "furnace_id", "start_time"]
        || rows[1].len() != 3
        || rows[2].iter().collect::<Vec<_>>() != ["t", "pressure"]
    {
        return Err(Error::parse(path, "malformed event header"));
    }
    let mut pressure = Vec::with_capacity(rows.len() - 3);
    for (i, rec) in rows[3..].iter().enumerate() {
        let line = i + 4;
        if rec.len() != 2 {
            return Err(Error::parse(
                path,
                format!("line {line}: expected t,pressure"),
            ));
        }
        let t: usize = parse_field(path, line, "t", &rec[0])?;
        if t != i {
            return Err(Error::parse(path, format!("line {line}: expected t={i}")));
        }
        pressure.push(parse_field(path, line, "pressure", &rec[1])?);
    }
    let ev = PumpingEvent {
        event_id: rows[1][0].to_string(),
        furnace_id: rows[1][1].to_string(),
        start_time: parse_field(path, 2, "start_time", &rows[1][2])?,
        pressure,
    };
    ev.validate()?;
    Ok(ev)
}

/// Solver settings and outcome stored next to a weight CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSidecar {
    pub sigma: f64,
    pub epsilon: f64,
    pub b_cap: f64,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Path of the JSON sidecar for a weight CSV (`w.csv` → `w.json`).
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_weights(w: &WeightVector, meta: &WeightSidecar, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let res = (|| -> std::io::Result<()> {
        writeln!(out, "index,weight")?;
        for (i, v) in w.weights.iter().enumerate() {
            writeln!(out, "{i},{v:?}")?;
        }
        out.flush()
    })();
    res.map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let mut json = serde_json::to_string_pretty(meta)?;
    json.push('\n');
    std::fs::write(&side, json).map_err(|e| Error::io(side, e))
}

/// Reads a weight CSV and, if present, its sidecar.
pub fn read_weights(path: &Path) -> Result<WeightVector> {
    let mut rdr = open_csv(path)?;
    let mut weights = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if i == 0 {
            if rec.iter().collect::<Vec<_>>() != ["index", "weight"] {
                return Err(Error::parse(path, "header must be index,weight"));
            }
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::parse(
                path,
                format!("line {}: expected index,weight", i + 1),
            ));
        }
        let idx: usize = parse_field(path, i + 1, "index", &rec[0])?;
        if idx != weights.len() {
            return Err(Error::parse(
                path,
                format!("line {}: index out of order", i + 1),
            ));
        }
        weights.push(parse_field::<f64>(path, i + 1, "weight", &rec[1])?);
    }
    let side = sidecar_path(path);
    let (b_cap, epsilon, sigma) = match std::fs::read_to_string(&side) {
        Ok(text) => {
            let m: WeightSidecar =
                serde_json::from_str(&text).map_err(|e| Error::parse(&side, e.to_string()))?;
            (m.b_cap, m.epsilon, m.sigma)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            (f64::INFINITY, f64::INFINITY, f64::NAN)
        }
        Err(e) => return Err(Error::io(side, e)),
    };
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::parse(path, "weights must be finite and nonnegative"));
    }
    Ok(WeightVector {
        weights,
        b_cap,
        epsilon,
        sigma,
    })
}
