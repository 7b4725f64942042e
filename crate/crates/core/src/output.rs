//! Result files: CSV tables with `#` metadata rows, a JSON summary, a
//! manifest listing every file with its SHA-256, and binary state checkpoints.
//!
//! CSV bodies depend only on the physics configuration, so reruns with a
//! different worker count produce identical bytes. Timings go to the manifest.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{decay_probability, fit_decay_rate, late_slope, FitWindow, TimeSeries};
use crate::config::{RunConfig, Scenario};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::observables::{Mode, Sign};
use crate::pipeline::{Check, RunReport, SpectrumReport, SweepReport, Timing};
use crate::propagator::SpinorField;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn num(v: f64) -> String {
    format!("{v:.10e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identifier of the physics configuration; the worker count does not enter.
pub fn run_id(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.workers = 1;
    sha256_hex(c.to_toml().as_bytes())[..16].to_string()
}

fn metadata(cfg: &RunConfig) -> Vec<String> {
    let mut rows = vec![
        format!("run_id: {}", run_id(cfg)),
        format!("version: {VERSION}"),
        format!("scenario: {}", cfg.scenario),
        format!("grid: L={} N={}", cfg.grid.length, cfg.grid.points),
        format!("well: V0={} D={} W={}", cfg.well.v0, cfg.well.d, cfg.well.w),
    ];
    if cfg.laser.enabled {
        rows.push(format!("laser: omega={} E0={}", cfg.laser.omega, cfg.laser.field));
    } else {
        rows.push("laser: off".into());
    }
    rows.push(format!(
        "schedule: T={} ramp={} dt<={} cutoff={}",
        cfg.plateau(),
        cfg.ramp(),
        cfg.schedule.dt,
        cfg.evolution.cutoff
    ));
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Collects files in one output directory and records them for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    meta: Vec<String>,
    files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir { dir: dir.to_path_buf(), meta: metadata(cfg), files: vec![] })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry { name: name.into(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut buf = Vec::new();
        for m in &self.meta {
            writeln!(buf, "# {m}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(columns).map_err(csv_err)?;
            for r in rows {
                w.write_record(r).map_err(csv_err)?;
            }
            w.flush()?;
        }
        self.write_bytes(name, &buf)
    }

    pub fn write_json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes `manifest.json`, which lists every file written so far.
    pub fn finish(mut self, cfg: &RunConfig, source: Option<&str>, checks: &[Check], timings: &[Timing]) -> Result<Vec<FileEntry>> {
        let manifest = json!({
            "version": VERSION,
            "run_id": run_id(cfg),
            "config": cfg,
            "config_toml": cfg.to_toml(),
            "config_source": source,
            "workers": cfg.workers,
            "grid": { "length": cfg.grid.length, "points": cfg.grid.points },
            "checks": checks,
            "timings": timings,
            "files": self.files,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join("manifest.json"), &text)?;
        self.files.push(FileEntry { name: "manifest.json".into(), bytes: text.len(), sha256: sha256_hex(text.as_bytes()) });
        Ok(self.files)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn write_spectrum_tables(out: &mut OutputDir, s: &SpectrumReport) -> Result<()> {
    let rows: Vec<Vec<String>> = (0..s.energies.len())
        .map(|n| {
            vec![
                n.to_string(),
                num(s.energies[n]),
                s.classes[n].label().to_string(),
                opt(s.width_of(n)),
                num(s.localization[n]),
            ]
        })
        .collect();
    out.write_csv("spectrum.csv", &["index", "energy", "class", "width", "p_in"], &rows)?;
    if let Some(ov) = &s.ground_overlap {
        let rows: Vec<Vec<String>> = (0..ov.p.len())
            .map(|i| vec![num(ov.p[i]), num(ov.negative[i]), num(ov.positive[i])])
            .collect();
        out.write_csv("ground_overlap.csv", &["p", "negative", "positive"], &rows)?;
    }
    Ok(())
}

fn spectrum_summary(s: &SpectrumReport) -> serde_json::Value {
    json!({
        "ground_energy": s.ground().map(|g| g.energy),
        "ground_width": s.ground().map(|g| g.width),
        "gap_states": s.bound.iter().map(|b| json!({"index": b.index, "energy": b.energy, "width": b.width})).collect::<Vec<_>>(),
        "quasibound": s.quasibound,
        "ground_negative_overlap": s.ground_overlap.as_ref().map(|o| o.negative_mass()),
    })
}

/// Writes the tables of a spectrum-only invocation.
pub fn write_spectrum(dir: &Path, cfg: &RunConfig, s: &SpectrumReport, source: Option<&str>) -> Result<Vec<FileEntry>> {
    let mut out = OutputDir::create(dir, cfg)?;
    write_spectrum_tables(&mut out, s)?;
    out.write_json("summary.json", &json!({ "run_id": run_id(cfg), "spectrum": spectrum_summary(s) }))?;
    out.finish(cfg, source, &[], &[])
}

pub fn write_run(dir: &Path, r: &RunReport, source: Option<&str>) -> Result<Vec<FileEntry>> {
    let cfg = &r.config;
    let mut out = OutputDir::create(dir, cfg)?;
    write_spectrum_tables(&mut out, &r.spectrum)?;
    if !r.in_field.is_empty() {
        let rows: Vec<Vec<String>> =
            r.in_field.iter().map(|x| vec![num(x.t), num(x.n_b), num(x.n_c), num(x.n_gap)]).collect();
        out.write_csv("in_field.csv", &["t", "n_b", "n_c", "n_gap"], &rows)?;
    }
    let rows: Vec<Vec<String>> = r
        .ramped
        .iter()
        .map(|x| vec![num(x.t), num(x.n), num(x.s_trace), num(x.rho_integral), num(x.chi_minus), opt(x.chi_plus)])
        .collect();
    out.write_csv("particle_number.csv", &["t", "n", "s_trace", "rho_integral", "chi_minus", "chi_plus"], &rows)?;
    if let Some(e) = &r.chi_minus {
        let plus = r.chi_plus.as_ref();
        let rows: Vec<Vec<String>> = (0..e.p.len())
            .map(|i| vec![num(e.p[i]), num(e.chi[i]), opt(plus.map(|p| p.chi[i]))])
            .collect();
        out.write_csv("momentum_spectrum.csv", &["p", "chi_minus", "chi_plus"], &rows)?;
    }
    if let Some(es) = &r.energy_spectrum {
        let rows: Vec<Vec<String>> = es.energy.iter().zip(&es.density).map(|(e, d)| vec![num(*e), num(*d)]).collect();
        out.write_csv("energy_spectrum.csv", &["energy", "s_plus"], &rows)?;
    }
    if let Some(rho) = &r.density {
        let grid = cfg.grid.build()?;
        let rows: Vec<Vec<String>> = grid.x().iter().zip(rho).map(|(x, v)| vec![num(*x), num(*v)]).collect();
        out.write_csv("density.csv", &["x", "rho"], &rows)?;
    }
    if let Some(occ) = &r.occupation {
        let rows: Vec<Vec<String>> = (0..occ.energy.len())
            .map(|i| {
                vec![(occ.first + i).to_string(), num(occ.energy[i]), num(occ.occupation[i]), num(1.0 - occ.occupation[i])]
            })
            .collect();
        out.write_csv("occupation.csv", &["index", "energy", "occupation", "depletion"], &rows)?;
    }
    if let Some(f) = &r.filling {
        let n = if cfg.scenario == Scenario::TwoState { f.total() } else { f.state(0) };
        let mut columns: Vec<String> = vec!["t".into()];
        columns.extend((0..f.energies.len()).map(|s| format!("filling_{s}")));
        columns.extend(["n".into(), "d".into()]);
        let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = (0..f.times.len())
            .map(|i| {
                let mut row = vec![num(f.times[i])];
                row.extend(f.filling[i].iter().map(|v| num(*v)));
                row.push(num(n[i]));
                row.push(num((cfg.analysis.saturation - n[i]).abs()));
                row
            })
            .collect();
        out.write_csv("decay.csv", &cols, &rows)?;
    }
    let summary = json!({
        "run_id": run_id(cfg),
        "scenario": cfg.scenario,
        "spectrum": spectrum_summary(&r.spectrum),
        "final_particle_number": r.final_number(),
        "final_in_field": r.in_field.last(),
        "filling_levels": r.filling.as_ref().map(|f| f.energies.clone()),
        "fits": r.fits,
        "checks": r.checks,
        "passed": r.passed(),
    });
    out.write_json("summary.json", &summary)?;
    out.finish(cfg, source, &r.checks, &r.timings)
}

pub fn write_sweep(dir: &Path, s: &SweepReport, source: Option<&str>) -> Result<Vec<FileEntry>> {
    let cfg = &s.config;
    let mut out = OutputDir::create(dir, cfg)?;
    let rows: Vec<Vec<String>> = s
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.d),
                num(r.v0),
                num(r.w),
                num(r.e_g),
                num(r.w_b),
                opt(r.gamma),
                opt(r.fit.map(|f| f.r_squared)),
                r.fit.map(|f| f.samples.to_string()).unwrap_or_default(),
                r.flag.clone().unwrap_or_default(),
            ]
        })
        .collect();
    out.write_csv("sweep.csv", &["d", "v0", "w", "e_g", "w_b", "gamma", "r_squared", "samples", "flag"], &rows)?;
    let mut rows = Vec::new();
    for (r, f) in s.rows.iter().zip(&s.series) {
        for (t, row) in f.times.iter().zip(&f.filling) {
            rows.push(vec![num(r.d), num(*t), num(row[0]), num((1.0 - row[0]).abs())]);
        }
    }
    out.write_csv("sweep_decay.csv", &["d", "t", "n_b", "decay_probability"], &rows)?;
    let summary = json!({
        "run_id": run_id(cfg),
        "rows": s.rows,
        "law": s.law,
        "excluded_window": cfg.sweep.exclude,
        "notes": s.notes,
    });
    out.write_json("summary.json", &summary)?;
    out.finish(cfg, source, &[], &s.timings)
}

/// Reads the data columns of a CSV written by [`OutputDir::write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|rec| rec.iter().map(String::from).collect()).map_err(csv_err))
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok((header, rows))
}

fn column(path: &Path, name: &str) -> Result<Vec<f64>> {
    let (header, rows) = read_csv(path)?;
    let i = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::BadSeries(format!("{} has no column `{name}`", path.display())))?;
    rows.iter()
        .map(|r| r[i].parse::<f64>().map_err(|e| Error::BadSeries(format!("{}: {e}", path.display()))))
        .collect()
}

/// Fits recomputed from stored series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reanalysis {
    pub window: FitWindow,
    pub saturation: f64,
    pub gamma: Option<crate::analysis::DecayFit>,
    pub slope_n: Option<crate::analysis::LinearFit>,
    pub slope_nc: Option<crate::analysis::LinearFit>,
    pub notes: Vec<String>,
}

/// Re-runs the fits on the series stored in `dir` and writes `analysis.json`.
///
/// The decay rate uses `decay.csv` when present and the ramped particle
/// number otherwise.
pub fn reanalyze(dir: &Path, window: FitWindow, saturation: f64) -> Result<Reanalysis> {
    let mut r = Reanalysis { window, saturation, gamma: None, slope_n: None, slope_nc: None, notes: vec![] };
    let decay = dir.join("decay.csv");
    let number = dir.join("particle_number.csv");
    let in_field = dir.join("in_field.csv");
    if !decay.exists() && !number.exists() {
        return Err(Error::BadSeries(format!("no stored series in {}", dir.display())));
    }
    let gamma_source = if decay.exists() { &decay } else { &number };
    let series = TimeSeries::new(column(gamma_source, "t")?, column(gamma_source, "n")?)?;
    match fit_decay_rate(&decay_probability(&series, saturation), window) {
        Ok(f) => r.gamma = Some(f),
        Err(e) => r.notes.push(format!("decay rate: {e}")),
    }
    if number.exists() {
        let n = TimeSeries::new(column(&number, "t")?, column(&number, "n")?)?;
        match late_slope(&n) {
            Ok(f) => r.slope_n = Some(f),
            Err(e) => r.notes.push(format!("late slope of N: {e}")),
        }
    }
    if in_field.exists() {
        let nc = TimeSeries::new(column(&in_field, "t")?, column(&in_field, "n_c")?)?;
        match late_slope(&nc) {
            Ok(f) => r.slope_nc = Some(f),
            Err(e) => r.notes.push(format!("late slope of N_c: {e}")),
        }
    }
    let mut text = serde_json::to_string_pretty(&r)?;
    text.push('\n');
    fs::write(dir.join("analysis.json"), text)?;
    Ok(r)
}

const MAGIC: &[u8; 8] = b"PCSTATE\0";
const CHECKPOINT_VERSION: u32 = 1;
/// Bytes before the amplitudes of each block.
pub const CHECKPOINT_HEADER: usize = 48;

/// One evolved state read back from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointBlock {
    pub length: f64,
    pub time: f64,
    pub mode: Mode,
    pub state: SpinorField,
}

/// Writes one block per state.
///
/// Block layout, little-endian: magic `PCSTATE\0` (8 bytes), format version
/// u32, energy sign i32 (+1 or -1), grid points N u64, mode index u64, box
/// length f64, time f64, then 2N complex amplitudes as (re, im) f64 pairs,
/// upper component first.
pub fn write_checkpoint(path: &Path, grid: &Grid, time: f64, modes: &[Mode], states: &[SpinorField]) -> Result<()> {
    if modes.len() != states.len() {
        return Err(Error::Checkpoint(format!("{} modes for {} states", modes.len(), states.len())));
    }
    let n = grid.len();
    let mut buf = Vec::with_capacity(states.len() * (CHECKPOINT_HEADER + 32 * n));
    for (m, s) in modes.iter().zip(states) {
        if s.points() != n {
            return Err(Error::Checkpoint(format!("state with {} points on a {n}-point grid", s.points())));
        }
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(if m.sign == Sign::Positive { 1i32 } else { -1i32 }).to_le_bytes());
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        buf.extend_from_slice(&(m.k as u64).to_le_bytes());
        buf.extend_from_slice(&grid.length().to_le_bytes());
        buf.extend_from_slice(&time.to_le_bytes());
        for c in s.as_slice() {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<CheckpointBlock>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: String| Error::Checkpoint(m);
    let mut blocks = Vec::new();
    let mut pos = 0;
    let take = |pos: &mut usize, len: usize| -> Result<&[u8]> {
        let s = bytes.get(*pos..*pos + len).ok_or_else(|| Error::Checkpoint("truncated block".into()))?;
        *pos += len;
        Ok(s)
    };
    let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
    while pos < bytes.len() {
        if take(&mut pos, 8)? != MAGIC {
            return Err(bad(format!("bad magic at byte {}", pos - 8)));
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let sign = match i32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) {
            1 => Sign::Positive,
            -1 => Sign::Negative,
            s => return Err(bad(format!("bad sign {s}"))),
        };
        let n = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let k = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
        let length = f64_at(take(&mut pos, 8)?);
        let time = f64_at(take(&mut pos, 8)?);
        if k >= n {
            return Err(bad(format!("mode {k} outside a {n}-point grid")));
        }
        let raw = take(&mut pos, 32 * n)?;
        let data = raw.chunks_exact(16).map(|c| Complex64::new(f64_at(&c[..8]), f64_at(&c[8..]))).collect();
        blocks.push(CheckpointBlock { length, time, mode: Mode { k, sign }, state: SpinorField::from_vec(data) });
    }
    Ok(blocks)
}
