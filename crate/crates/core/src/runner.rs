//! Seed sweeps and result tables.
//!
//! A run writes into `<out>/<label>/`:
//!
//! | file | columns |
//! |---|---|
//! | `ipg_ccdf_<bin>.csv`, `ia_ccdf_<bin>.csv` | `ms,ccdf` for every ms up to the largest sample |
//! | `ipg_p999.csv`, `ia_p999.csv` | `bin_m,samples,mean_ms,p999_ms,silent_pairs` |
//! | `prr_vs_distance.csv` | `distance_m,transmitted,received,prr` |
//! | `cbr_summary.csv` | `seed,vehicle,samples,mean_cbr`; last row `all,all,…` |
//! | `comparison.csv` | `metric,bin_m,baseline,variant,tail_improvement,defined_points,excluded_points` |
//! | `trace.csv` | `seed,tx_id,rx_id,t_gen,t_tx,t_rx,distance_m,slot` (when enabled) |
//! | `run_manifest.json` | seeds, config hash, simulator version, toggles, summary |
//!
//! Empty cells mean "undefined" (no samples, or a zero baseline).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{parse_config, SimConfig};
use crate::engine::{run, SimOutput};
use crate::error::{Error, Result};
use crate::metrics::{tail_improvement, Ccdf, IntHistogram, MetricsStore};

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Defaults to [`SimConfig::label`].
    pub label: Option<String>,
    /// Label of an earlier run in `out_dir` to compare against.
    pub baseline: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub metric: &'static str,
    pub bin_m: f64,
    pub tail_improvement: Option<f64>,
    pub defined_points: usize,
    pub excluded_points: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub label: String,
    pub dir: PathBuf,
    pub store: MetricsStore,
    /// Absent when no baseline was requested or its tables were missing.
    pub comparison: Option<Vec<ComparisonRow>>,
}

/// Runs every seed (in parallel) and returns the outputs in seed order.
pub fn run_seeds(config: &SimConfig, seeds: &[u64]) -> Result<Vec<SimOutput>> {
    config.validate()?;
    seeds.par_iter().map(|&seed| run(config, seed)).collect()
}

/// Merges per-seed stores in order.
pub fn merge_outputs(outputs: &[SimOutput]) -> Result<MetricsStore> {
    let (first, rest) = outputs.split_first().ok_or(Error::EmptySamples)?;
    let mut store = first.store.clone();
    for o in rest {
        store.merge(&o.store)?;
    }
    Ok(store)
}

pub fn execute(manifest: &RunManifest) -> Result<RunReport> {
    let config = parse_config(&manifest.config_path)?;
    execute_config(&config, manifest)
}

/// [`execute`] with an already parsed configuration.
pub fn execute_config(config: &SimConfig, manifest: &RunManifest) -> Result<RunReport> {
    if manifest.seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed is required"));
    }
    let label = manifest.label.clone().unwrap_or_else(|| config.label());
    let dir = manifest.out_dir.join(&label);
    info!("running {label} with seeds {:?}", manifest.seeds);
    let outputs = run_seeds(config, &manifest.seeds)?;
    let store = merge_outputs(&outputs)?;

    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (i, bin) in store.bins.iter().enumerate() {
        let name = bin_name(bin.center_m);
        write_file(&dir.join(format!("ipg_ccdf_{name}.csv")), &ccdf_table("ipg_ms", &store.ipg[i]))?;
        write_file(&dir.join(format!("ia_ccdf_{name}.csv")), &ccdf_table("ia_ms", &store.ia[i]))?;
    }
    write_file(&dir.join("ipg_p999.csv"), &percentile_table(&store, &store.ipg))?;
    write_file(&dir.join("ia_p999.csv"), &percentile_table(&store, &store.ia))?;
    write_file(&dir.join("prr_vs_distance.csv"), &prr_table(&store))?;
    write_file(&dir.join("cbr_summary.csv"), &cbr_table(&manifest.seeds, &outputs, &store))?;
    if config.metrics.trace {
        write_file(&dir.join("trace.csv"), &trace_table(&manifest.seeds, &outputs))?;
    }

    let comparison = match &manifest.baseline {
        Some(base) => compare(&manifest.out_dir.join(base), &store, config)?,
        None => None,
    };
    if let (Some(rows), Some(base)) = (&comparison, &manifest.baseline) {
        write_file(&dir.join("comparison.csv"), &comparison_table(base, &label, rows))?;
    }

    let run_manifest = ManifestJson {
        simulator: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        label: &label,
        config_path: manifest.config_path.display().to_string(),
        config_sha256: config.hash(),
        seeds: &manifest.seeds,
        baseline: manifest.baseline.as_deref(),
        toggles: Toggles {
            one_shot: config.sps.one_shot.to_string(),
            harq: config.sps.harq,
            congestion_control: config.congestion.enabled,
            bandwidth_mhz: config.pool.bandwidth_mhz.mhz(),
        },
        summary: Summary {
            mean_generation_interval_ms: store.interval.mean(),
            mean_cbr: store.mean_cbr(),
            replaced_bsms: outputs.iter().map(|o| o.replaced_bsms).sum(),
        },
        config: config.clone(),
    };
    let json = serde_json::to_string_pretty(&run_manifest).expect("manifest serialises");
    write_file(&dir.join("run_manifest.json"), &(json + "\n"))?;
    info!("wrote {}", dir.display());

    Ok(RunReport {
        label,
        dir,
        store,
        comparison,
    })
}

#[derive(Serialize)]
struct Toggles {
    one_shot: String,
    harq: bool,
    congestion_control: bool,
    bandwidth_mhz: u32,
}

#[derive(Serialize)]
struct Summary {
    mean_generation_interval_ms: Option<f64>,
    mean_cbr: Option<f64>,
    replaced_bsms: u64,
}

#[derive(Serialize)]
struct ManifestJson<'a> {
    simulator: &'a str,
    version: &'a str,
    label: &'a str,
    config_path: String,
    config_sha256: String,
    seeds: &'a [u64],
    baseline: Option<&'a str>,
    toggles: Toggles,
    summary: Summary,
    config: SimConfig,
}

/// `200.0` → `200`, `12.5` → `12.5`.
pub fn bin_name(center_m: f64) -> String {
    if center_m.fract() == 0.0 {
        format!("{}", center_m as i64)
    } else {
        format!("{center_m}")
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn ccdf_table(column: &str, hist: &IntHistogram) -> String {
    let mut out = format!("{column},ccdf\n");
    if let Ok(f) = hist.ccdf() {
        for (i, v) in f.points() {
            writeln!(out, "{i},{v}").unwrap();
        }
    }
    out
}

fn percentile_table(store: &MetricsStore, hists: &[IntHistogram]) -> String {
    let mut out = String::from("bin_m,samples,mean_ms,p999_ms,silent_pairs\n");
    for ((bin, h), silent) in store.bins.iter().zip(hists).zip(&store.silent_pairs) {
        writeln!(
            out,
            "{},{},{},{},{}",
            bin.center_m,
            h.total(),
            opt(h.mean()),
            opt(h.percentile_999().ok()),
            silent
        )
        .unwrap();
    }
    out
}

fn prr_table(store: &MetricsStore) -> String {
    let mut out = String::from("distance_m,transmitted,received,prr\n");
    for bin in 0..store.prr.len() {
        let (t, r) = store.prr.counts(bin);
        if t > 0 {
            writeln!(out, "{bin},{t},{r},{}", r as f64 / t as f64).unwrap();
        }
    }
    out
}

fn cbr_table(seeds: &[u64], outputs: &[SimOutput], store: &MetricsStore) -> String {
    let mut out = String::from("seed,vehicle,samples,mean_cbr\n");
    for (seed, o) in seeds.iter().zip(outputs) {
        for c in &o.store.cbr {
            writeln!(out, "{seed},{},{},{}", c.vehicle, c.samples, opt(c.mean())).unwrap();
        }
    }
    let samples: u64 = store.cbr.iter().map(|c| c.samples).sum();
    writeln!(out, "all,all,{samples},{}", opt(store.mean_cbr())).unwrap();
    out
}

fn trace_table(seeds: &[u64], outputs: &[SimOutput]) -> String {
    let mut out = String::from("seed,tx_id,rx_id,t_gen,t_tx,t_rx,distance_m,slot\n");
    for (seed, o) in seeds.iter().zip(outputs) {
        for r in &o.trace {
            writeln!(
                out,
                "{seed},{},{},{},{},{},{},{}",
                r.tx_id, r.rx_id, r.t_gen, r.t_tx, r.t_rx, r.distance_m, r.slot
            )
            .unwrap();
        }
    }
    out
}

fn comparison_table(base: &str, variant: &str, rows: &[ComparisonRow]) -> String {
    let mut out =
        String::from("metric,bin_m,baseline,variant,tail_improvement,defined_points,excluded_points\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{base},{variant},{},{},{}",
            r.metric,
            r.bin_m,
            opt(r.tail_improvement),
            r.defined_points,
            r.excluded_points
        )
        .unwrap();
    }
    out
}

/// Reads a `ms,ccdf` table written by a previous run.
pub fn read_ccdf(path: &Path) -> Result<Ccdf> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Table {
        path: path.to_path_buf(),
        reason,
    };
    let mut values = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let (i, v) = line
            .split_once(',')
            .ok_or_else(|| bad(format!("line {}: expected two columns", n + 1)))?;
        let i: usize = i.parse().map_err(|_| bad(format!("line {}: bad index", n + 1)))?;
        let v: f64 = v.parse().map_err(|_| bad(format!("line {}: bad value", n + 1)))?;
        if i != values.len() {
            return Err(bad(format!("line {}: index {i} out of sequence", n + 1)));
        }
        values.push(v);
    }
    Ok(Ccdf::from_values(values))
}

fn compare(base_dir: &Path, store: &MetricsStore, config: &SimConfig) -> Result<Option<Vec<ComparisonRow>>> {
    let (from, to) = (config.metrics.tail_from_ms, config.metrics.tail_to_ms);
    let mut rows = Vec::new();
    for (metric, hists) in [("ipg", &store.ipg), ("ia", &store.ia)] {
        for (bin, hist) in store.bins.iter().zip(hists.iter()) {
            let path = base_dir.join(format!("{metric}_ccdf_{}.csv", bin_name(bin.center_m)));
            if !path.exists() {
                warn!("baseline table {} missing; comparison skipped", path.display());
                return Ok(None);
            }
            let base = read_ccdf(&path)?;
            let variant = hist.ccdf().unwrap_or_else(|_| Ccdf::from_values(Vec::new()));
            let row = match tail_improvement(&base, &variant, from, to) {
                Ok(t) => ComparisonRow {
                    metric,
                    bin_m: bin.center_m,
                    tail_improvement: Some(t.mean),
                    defined_points: t.defined_points,
                    excluded_points: t.excluded_points,
                },
                Err(Error::ZeroBaseline) => ComparisonRow {
                    metric,
                    bin_m: bin.center_m,
                    tail_improvement: None,
                    defined_points: 0,
                    excluded_points: (to - from + 1) as usize,
                },
                Err(e) => return Err(e),
            };
            rows.push(row);
        }
    }
    Ok(Some(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_names() {
        assert_eq!(bin_name(200.0), "200");
        assert_eq!(bin_name(12.5), "12.5");
    }

    #[test]
    fn ccdf_table_round_trips() {
        let mut h = IntHistogram::new();
        [1, 2, 3, 3, 7].iter().for_each(|&v| h.add(v));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, ccdf_table("ipg_ms", &h)).unwrap();
        assert_eq!(read_ccdf(&p).unwrap(), h.ccdf().unwrap());
    }

    #[test]
    fn malformed_table_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "ipg_ms,ccdf\n0,1\n2,0.5\n").unwrap();
        assert!(matches!(read_ccdf(&p), Err(Error::Table { .. })));
    }
}
