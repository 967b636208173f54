//! File formats: CSV tables with a header row, JSON sidecars and run
//! manifests. Floats are written in shortest round-trip form so a rerun with
//! the same inputs reproduces every file byte for byte.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bloch::EnsembleTrace;
use crate::error::{Error, Result};
use crate::estimation::{FluorescenceTrace, TraceMetadata};
use crate::thermal::{CacheHeader, PropagatorCache};

/// `trace.csv` → `trace.json`.
pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    path.as_ref().with_extension("json")
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

/// Writes a numeric table with a header row.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::Parse(format!("row has {} fields, header has {}", row.len(), header.len())));
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric table; returns the header and the rows.
pub fn read_table(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("{}: row {}: cannot parse {f:?} as a number", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn column(header: &[String], name: &str, path: &Path) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Parse(format!("{}: missing column {name:?}", path.display())))
}

/// Writes the cache as `eps,rate` rows with the header in the JSON sidecar.
/// The final row holds the steady-state rate at the cache end.
pub fn write_cache(path: impl AsRef<Path>, cache: &PropagatorCache) -> Result<()> {
    let path = path.as_ref();
    let rows: Vec<Vec<f64>> = cache.eps_grid.iter().zip(&cache.rate_grid).map(|(e, r)| vec![*e, *r]).collect();
    write_table(path, &["eps", "rate"], &rows)?;
    write_json(sidecar_path(path), &cache.header())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<PropagatorCache> {
    let path = path.as_ref();
    let h: CacheHeader = read_json(sidecar_path(path))?;
    let (header, rows) = read_table(path)?;
    let (ie, ir) = (column(&header, "eps", path)?, column(&header, "rate", path)?);
    let eps = rows.iter().map(|r| r[ie]).collect();
    let rate = rows.iter().map(|r| r[ir]).collect();
    PropagatorCache::from_grids(h.delta, h.r, h.dtau, h.eps0_max, h.include_recoil, eps, rate)
}

/// Writes `bin_start_s,bin_width_s,counts` plus the metadata sidecar.
pub fn write_trace(path: impl AsRef<Path>, trace: &FluorescenceTrace) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_start_s", "bin_width_s", "counts"])?;
    for i in 0..trace.len() {
        w.write_record([trace.bin_start_s[i].to_string(), trace.bin_width_s[i].to_string(), trace.counts[i].to_string()])?;
    }
    w.flush()?;
    write_json(sidecar_path(path), &trace.metadata())
}

/// Reads a trace CSV; the metadata defaults to the sidecar next to it.
pub fn read_trace(path: impl AsRef<Path>, metadata: Option<&Path>) -> Result<FluorescenceTrace> {
    let path = path.as_ref();
    let meta: TraceMetadata = match metadata {
        Some(m) => read_json(m)?,
        None => read_json(sidecar_path(path))?,
    };
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let (is, iw, ic) =
        (column(&header, "bin_start_s", path)?, column(&header, "bin_width_s", path)?, column(&header, "counts", path)?);
    let mut trace = FluorescenceTrace {
        bin_start_s: Vec::new(),
        bin_width_s: Vec::new(),
        counts: Vec::new(),
        n_cycles: meta.n_cycles,
        detection_rate_hint: meta.detection_rate_hint,
        dark_rate_hz: meta.dark_rate_hz,
        heat_duration_s: meta.heat_duration_s,
    };
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |f: &str| Error::Parse(format!("{}: row {}: bad value {f:?}", path.display(), line + 1));
        let get = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
        trace.bin_start_s.push(get(is).parse().map_err(|_| bad(get(is)))?);
        trace.bin_width_s.push(get(iw).parse().map_err(|_| bad(get(iw)))?);
        trace.counts.push(get(ic).parse().map_err(|_| bad(get(ic)))?);
    }
    trace.validate()?;
    Ok(trace)
}

/// Writes `t_s,mean_rate_hz,stderr_hz,n_traj`.
pub fn write_ensemble(path: impl AsRef<Path>, trace: &EnsembleTrace) -> Result<()> {
    let rows: Vec<Vec<f64>> = (0..trace.t_s.len())
        .map(|i| vec![trace.t_s[i], trace.mean_rate_hz[i], trace.stderr_hz[i], trace.n_traj as f64])
        .collect();
    write_table(path, &["t_s", "mean_rate_hz", "stderr_hz", "n_traj"], &rows)
}

/// Record of one run: the fully resolved configuration and the files it wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            outputs: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    /// Writes `<command>.manifest.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir.as_ref().join(Self::file_name(&self.command));
        write_json(&path, self)?;
        Ok(path)
    }
}
