//! Parameter sweeps over trajectory ensembles, steady-state statistics and
//! the raw/aggregate file formats.
//!
//! A sweep directory holds one CSV per finished grid point under `points/`,
//! a `manifest.json` checkpoint, and on completion `raw.csv` with every
//! point in grid order.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{
    run_trajectory_indexed, CircuitParams, EngineKind, EventCounts, GridKey, ObservableSample,
    StepOrder, TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::mps::TruncationPolicy;
use crate::rng::mix;

pub const RAW_HEADER: [&str; 10] = [
    "eta", "p", "beta", "N", "traj", "seed", "t", "entanglement", "magic", "magic_err",
];
pub const AGGREGATE_HEADER: [&str; 10] = [
    "eta", "p", "beta", "N", "quantity", "mean", "raw_std", "rescaled_std", "P", "n_traj",
];
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RAW_FILE: &str = "raw.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
const POINTS_DIR: &str = "points";

fn default_trajectories() -> usize {
    512
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(rename = "eta")]
    pub eta_values: Vec<f64>,
    #[serde(rename = "p")]
    pub p_values: Vec<f64>,
    #[serde(rename = "n")]
    pub n_values: Vec<usize>,
    pub beta: f64,
    #[serde(default = "default_trajectories")]
    pub n_trajectories: usize,
    /// `(p, N)` pairs skipped for every η.
    #[serde(default)]
    pub exclusions: Vec<(f64, usize)>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.eta_values.is_empty() {
            return Err(Error::param("eta", "grid is empty"));
        }
        if self.p_values.is_empty() {
            return Err(Error::param("p", "grid is empty"));
        }
        if self.n_values.is_empty() {
            return Err(Error::param("n", "grid is empty"));
        }
        if self.n_trajectories == 0 {
            return Err(Error::param("n_trajectories", "must be positive"));
        }
        for &(p, n) in &self.exclusions {
            let in_grid = self.p_values.iter().any(|&q| q.to_bits() == p.to_bits())
                && self.n_values.contains(&n);
            if !in_grid {
                return Err(Error::param(
                    "exclusions",
                    format!("(p = {p}, N = {n}) is not a grid point"),
                ));
            }
        }
        Ok(())
    }

    pub fn is_excluded(&self, key: &GridKey) -> bool {
        self.exclusions
            .iter()
            .any(|&(p, n)| p.to_bits() == key.p.to_bits() && n == key.n)
    }

    /// Every grid point, η outermost then p then N, with its exclusion flag.
    pub fn points(&self) -> Vec<(GridKey, bool)> {
        let mut out = Vec::new();
        for &eta in &self.eta_values {
            for &p in &self.p_values {
                for &n in &self.n_values {
                    let key = GridKey {
                        eta,
                        p,
                        beta: self.beta,
                        n,
                    };
                    out.push((key, self.is_excluded(&key)));
                }
            }
        }
        out
    }
}

fn default_magic_samples() -> usize {
    crate::magic::DEFAULT_MAGIC_SAMPLES
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: SweepGrid,
    pub engine: EngineKind,
    #[serde(default)]
    pub truncation: TruncationPolicy,
    #[serde(default = "default_magic_samples")]
    pub magic_samples: usize,
    pub master_seed: u64,
    #[serde(default = "default_true")]
    pub brickwork: bool,
    #[serde(default)]
    pub step_order: StepOrder,
}

impl SweepConfig {
    pub fn params_for(&self, key: &GridKey) -> CircuitParams {
        let mut params = CircuitParams::new(key.n, key.p, key.eta, key.beta, self.engine);
        params.truncation = self.truncation;
        params.magic_samples = self.magic_samples;
        params.brickwork = self.brickwork;
        params.step_order = self.step_order;
        params
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        for (key, _) in self.grid.points() {
            self.params_for(&key).validate()?;
        }
        Ok(())
    }
}

pub fn trajectory_seed(master_seed: u64, key: &GridKey, traj: usize) -> u64 {
    let w = key.seed_words();
    mix(master_seed, &[w[0], w[1], w[2], w[3], traj as u64])
}

/// Runs all trajectories of one grid point, parallel over trajectories on the
/// current rayon pool, returned in trajectory order.
pub fn run_point(config: &SweepConfig, key: &GridKey) -> Result<Vec<TrajectoryRecord>> {
    let params = config.params_for(key);
    params.validate()?;
    (0..config.grid.n_trajectories)
        .into_par_iter()
        .map(|traj| run_trajectory_indexed(&params, trajectory_seed(config.master_seed, key, traj), traj))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletedPoint {
    pub eta: f64,
    pub p: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub n_traj: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub config: SweepConfig,
    pub completed: Vec<CompletedPoint>,
    pub excluded: Vec<GridKey>,
}

impl Manifest {
    fn find(&self, key: &GridKey) -> Option<&CompletedPoint> {
        self.completed.iter().find(|c| {
            GridKey {
                eta: c.eta,
                p: c.p,
                beta: c.beta,
                n: c.n,
            }
            .same_as(key)
        })
    }
}

pub fn read_manifest(dir: &Path) -> Result<Option<Manifest>> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
}

pub fn point_file_name(key: &GridKey) -> String {
    format!("eta{}_p{}_beta{}_N{}.csv", key.eta, key.p, key.beta, key.n)
}

#[derive(Debug)]
pub struct PointFailure {
    pub key: GridKey,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct SweepOutcome {
    /// Records per finished grid point, in grid order.
    pub points: Vec<(GridKey, Vec<TrajectoryRecord>)>,
    pub excluded: Vec<GridKey>,
    pub failures: Vec<PointFailure>,
    /// Points loaded from an earlier run instead of simulated.
    pub resumed: usize,
}

impl SweepOutcome {
    pub fn records(&self) -> impl Iterator<Item = &TrajectoryRecord> {
        self.points.iter().flat_map(|(_, r)| r.iter())
    }
}

/// Runs a sweep with `workers` threads.
///
/// With `out_dir` set, each finished point is written and checkpointed
/// immediately, and points already listed in an existing manifest for the
/// same configuration are loaded instead of rerun. A failing point is
/// reported in the outcome and does not stop the others.
pub fn run_sweep(config: &SweepConfig, workers: usize, out_dir: Option<&Path>) -> Result<SweepOutcome> {
    config.validate()?;
    if workers == 0 {
        return Err(Error::param("workers", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param("workers", e.to_string()))?;

    let mut manifest = Manifest {
        master_seed: config.master_seed,
        config: config.clone(),
        completed: Vec::new(),
        excluded: Vec::new(),
    };
    if let Some(dir) = out_dir {
        let points_dir = dir.join(POINTS_DIR);
        fs::create_dir_all(&points_dir).map_err(|e| Error::io(&points_dir, e))?;
        if let Some(old) = read_manifest(dir)? {
            if old.config != *config {
                return Err(Error::param(
                    "output_dir",
                    format!("{} holds a sweep with a different configuration", dir.display()),
                ));
            }
            manifest.completed = old.completed;
        }
    }

    let mut outcome = SweepOutcome::default();
    for (key, excluded) in config.grid.points() {
        if excluded {
            outcome.excluded.push(key);
            manifest.excluded.push(key);
            continue;
        }
        if let (Some(dir), Some(done)) = (out_dir, manifest.find(&key)) {
            let path = dir.join(POINTS_DIR).join(&done.file);
            match read_raw_csv(&path) {
                Ok(records) if records.len() == done.n_traj => {
                    log::info!("resuming {}: loaded {} trajectories", done.file, records.len());
                    outcome.points.push((key, records));
                    outcome.resumed += 1;
                    continue;
                }
                _ => log::warn!("checkpoint {} unreadable, recomputing", path.display()),
            }
        }
        log::info!(
            "running eta={} p={} beta={} N={} ({} trajectories)",
            key.eta, key.p, key.beta, key.n, config.grid.n_trajectories
        );
        let result = pool.install(|| run_point(config, &key)).and_then(|records| {
            if let Some(dir) = out_dir {
                let file = point_file_name(&key);
                write_atomic(&dir.join(POINTS_DIR).join(&file), &raw_csv_bytes(&records)?)?;
                manifest.completed.retain(|c| {
                    !GridKey { eta: c.eta, p: c.p, beta: c.beta, n: c.n }.same_as(&key)
                });
                manifest.completed.push(CompletedPoint {
                    eta: key.eta,
                    p: key.p,
                    beta: key.beta,
                    n: key.n,
                    n_traj: records.len(),
                    file,
                });
                write_manifest(dir, &manifest)?;
            }
            Ok(records)
        });
        match result {
            Ok(records) => outcome.points.push((key, records)),
            Err(error) => {
                log::error!("grid point eta={} p={} N={} failed: {error}", key.eta, key.p, key.n);
                outcome.failures.push(PointFailure { key, error });
            }
        }
    }

    if let Some(dir) = out_dir {
        // keep the manifest in grid order regardless of completion history
        let order: Vec<GridKey> = config.grid.points().into_iter().map(|(k, _)| k).collect();
        manifest.completed.sort_by_key(|c| {
            order
                .iter()
                .position(|k| GridKey { eta: c.eta, p: c.p, beta: c.beta, n: c.n }.same_as(k))
                .unwrap_or(usize::MAX)
        });
        write_manifest(dir, &manifest)?;
        let all: Vec<TrajectoryRecord> = outcome.records().cloned().collect();
        write_atomic(&dir.join(RAW_FILE), &raw_csv_bytes(&all)?)?;
    }
    Ok(outcome)
}

fn opt_field(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_raw_csv<W: std::io::Write>(writer: W, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RAW_HEADER)?;
    for rec in records {
        for s in &rec.samples {
            w.write_record([
                rec.key.eta.to_string(),
                rec.key.p.to_string(),
                rec.key.beta.to_string(),
                rec.key.n.to_string(),
                rec.traj.to_string(),
                rec.seed.to_string(),
                s.t.to_string(),
                s.entanglement.to_string(),
                opt_field(s.magic),
                opt_field(s.magic_err),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<raw csv>", e))?;
    Ok(())
}

fn raw_csv_bytes(records: &[TrajectoryRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_raw_csv(&mut buf, records)?;
    Ok(buf)
}

#[derive(Debug, Deserialize)]
struct RawRow {
    eta: f64,
    p: f64,
    beta: f64,
    #[serde(rename = "N")]
    n: usize,
    traj: usize,
    seed: u64,
    t: usize,
    entanglement: f64,
    magic: Option<f64>,
    magic_err: Option<f64>,
}

/// Reads a raw CSV back into records. Event counts are not stored and come
/// back as zero.
pub fn read_raw<R: std::io::Read>(reader: R) -> Result<Vec<TrajectoryRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out: Vec<TrajectoryRecord> = Vec::new();
    for row in rdr.deserialize() {
        let row: RawRow = row?;
        let key = GridKey {
            eta: row.eta,
            p: row.p,
            beta: row.beta,
            n: row.n,
        };
        let sample = ObservableSample {
            t: row.t,
            entanglement: row.entanglement,
            magic: row.magic,
            magic_err: row.magic_err,
        };
        match out.last_mut() {
            Some(last) if last.key.same_as(&key) && last.traj == row.traj && last.seed == row.seed => {
                last.samples.push(sample)
            }
            _ => out.push(TrajectoryRecord {
                key,
                traj: row.traj,
                seed: row.seed,
                samples: vec![sample],
                events: EventCounts::default(),
            }),
        }
    }
    Ok(out)
}

pub fn read_raw_csv(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_raw(std::io::BufReader::new(file))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Entanglement,
    Magic,
}

impl Quantity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Quantity::Entanglement => "entanglement",
            Quantity::Magic => "magic",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entanglement" => Ok(Quantity::Entanglement),
            "magic" => Ok(Quantity::Magic),
            _ => Err(Error::param("quantity", format!("unknown quantity {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub mean: f64,
    pub raw_std: f64,
    pub rescaled_std: f64,
}

impl WindowStats {
    /// Mean and sample standard deviation of the window values, with the
    /// standard deviation also divided by `√P`.
    pub fn from_window(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                found: values.len(),
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let raw_std = var.sqrt();
        Ok(WindowStats {
            mean,
            raw_std,
            rescaled_std: raw_std / n.sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub key: GridKey,
    pub n_traj: usize,
    /// Number of window time steps `P`.
    pub window_count: usize,
    pub entanglement: WindowStats,
    pub magic: Option<WindowStats>,
}

impl EnsembleStats {
    pub fn get(&self, q: Quantity) -> Option<&WindowStats> {
        match q {
            Quantity::Entanglement => Some(&self.entanglement),
            Quantity::Magic => self.magic.as_ref(),
        }
    }
}

/// Whether sample time `t` falls in the steady-state window `2N < t ≤ 4N`.
pub fn in_window(t: usize, n: usize) -> bool {
    t > 2 * n && t <= 4 * n
}

/// Trajectory-averaged observables at each recorded time step.
pub fn mean_series(records: &[TrajectoryRecord]) -> Vec<(usize, f64, Option<f64>)> {
    let mut acc: BTreeMap<usize, (f64, f64, usize, bool)> = BTreeMap::new();
    for rec in records {
        for s in &rec.samples {
            let e = acc.entry(s.t).or_insert((0.0, 0.0, 0, true));
            e.0 += s.entanglement;
            match s.magic {
                Some(m) => e.1 += m,
                None => e.3 = false,
            }
            e.2 += 1;
        }
    }
    acc.into_iter()
        .map(|(t, (e, m, c, has_magic))| {
            let c = c as f64;
            (t, e / c, has_magic.then_some(m / c))
        })
        .collect()
}

/// Steady-state statistics of one grid point over the window `2N < t ≤ 4N`.
pub fn steady_state_stats(records: &[TrajectoryRecord]) -> Result<EnsembleStats> {
    let first = records.first().ok_or(Error::TooFewSamples { needed: 2, found: 0 })?;
    let key = first.key;
    if let Some(other) = records.iter().find(|r| !r.key.same_as(&key)) {
        return Err(Error::param(
            "records",
            format!("mixed grid points: {:?} and {:?}", key, other.key),
        ));
    }
    let window: Vec<(usize, f64, Option<f64>)> = mean_series(records)
        .into_iter()
        .filter(|(t, _, _)| in_window(*t, key.n))
        .collect();
    let ent: Vec<f64> = window.iter().map(|w| w.1).collect();
    let entanglement = WindowStats::from_window(&ent)?;
    let magic = if window.iter().all(|w| w.2.is_some()) {
        let mag: Vec<f64> = window.iter().filter_map(|w| w.2).collect();
        Some(WindowStats::from_window(&mag)?)
    } else {
        None
    };
    Ok(EnsembleStats {
        key,
        n_traj: records.len(),
        window_count: window.len(),
        entanglement,
        magic,
    })
}

/// One row of the aggregate file. Excluded or failed points carry no
/// statistics and `n_traj = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub eta: f64,
    pub p: f64,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub quantity: Quantity,
    pub mean: Option<f64>,
    pub raw_std: Option<f64>,
    pub rescaled_std: Option<f64>,
    #[serde(rename = "P")]
    pub window_count: Option<usize>,
    pub n_traj: usize,
}

impl AggregateRow {
    pub fn key(&self) -> GridKey {
        GridKey {
            eta: self.eta,
            p: self.p,
            beta: self.beta,
            n: self.n,
        }
    }

    pub fn is_present(&self) -> bool {
        self.n_traj > 0 && self.mean.is_some()
    }

    fn absent(key: &GridKey, quantity: Quantity) -> Self {
        AggregateRow {
            eta: key.eta,
            p: key.p,
            beta: key.beta,
            n: key.n,
            quantity,
            mean: None,
            raw_std: None,
            rescaled_std: None,
            window_count: None,
            n_traj: 0,
        }
    }

    pub fn from_stats(stats: &EnsembleStats) -> Vec<AggregateRow> {
        [Quantity::Entanglement, Quantity::Magic]
            .into_iter()
            .filter_map(|q| {
                stats.get(q).map(|w| AggregateRow {
                    eta: stats.key.eta,
                    p: stats.key.p,
                    beta: stats.key.beta,
                    n: stats.key.n,
                    quantity: q,
                    mean: Some(w.mean),
                    raw_std: Some(w.raw_std),
                    rescaled_std: Some(w.rescaled_std),
                    window_count: Some(stats.window_count),
                    n_traj: stats.n_traj,
                })
            })
            .collect()
    }
}

/// Aggregate rows for a whole sweep in grid order. Points without records
/// appear with empty statistics.
pub fn aggregate(config: &SweepConfig, outcome: &SweepOutcome) -> Result<Vec<AggregateRow>> {
    let mut rows = Vec::new();
    let quantities: &[Quantity] = match config.engine {
        EngineKind::Tableau => &[Quantity::Entanglement],
        _ => &[Quantity::Entanglement, Quantity::Magic],
    };
    for (key, _) in config.grid.points() {
        match outcome.points.iter().find(|(k, _)| k.same_as(&key)) {
            Some((_, records)) => rows.extend(AggregateRow::from_stats(&steady_state_stats(records)?)),
            None => rows.extend(quantities.iter().map(|&q| AggregateRow::absent(&key, q))),
        }
    }
    Ok(rows)
}

/// Groups raw records by grid point, in order of first appearance.
pub fn group_by_point(records: Vec<TrajectoryRecord>) -> Vec<(GridKey, Vec<TrajectoryRecord>)> {
    let mut groups: Vec<(GridKey, Vec<TrajectoryRecord>)> = Vec::new();
    for rec in records {
        match groups.iter_mut().find(|(k, _)| k.same_as(&rec.key)) {
            Some((_, g)) => g.push(rec),
            None => groups.push((rec.key, vec![rec])),
        }
    }
    groups
}

pub fn write_aggregate<W: std::io::Write>(writer: W, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.eta.to_string(),
            r.p.to_string(),
            r.beta.to_string(),
            r.n.to_string(),
            r.quantity.to_string(),
            opt_field(r.mean),
            opt_field(r.raw_std),
            opt_field(r.rescaled_std),
            r.window_count.map(|c| c.to_string()).unwrap_or_default(),
            r.n_traj.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<aggregate csv>", e))?;
    Ok(())
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut buf = Vec::new();
    write_aggregate(&mut buf, rows)?;
    write_atomic(path, &buf)
}

pub fn read_aggregate<R: std::io::Read>(reader: R) -> Result<Vec<AggregateRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_aggregate(std::io::BufReader::new(file))
}

pub fn raw_path(dir: &Path) -> PathBuf {
    dir.join(RAW_FILE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(engine: EngineKind, n_traj: usize) -> SweepConfig {
        SweepConfig {
            grid: SweepGrid {
                eta_values: vec![1.0],
                p_values: vec![0.2, 0.3],
                n_values: vec![8],
                beta: 1.0,
                n_trajectories: n_traj,
                exclusions: vec![(0.3, 8)],
            },
            engine,
            truncation: TruncationPolicy::default(),
            magic_samples: 16,
            master_seed: 7,
            brickwork: true,
            step_order: StepOrder::default(),
        }
    }

    fn record(n: usize, series: &[(usize, f64)]) -> TrajectoryRecord {
        TrajectoryRecord {
            key: GridKey { eta: 1.0, p: 0.2, beta: 1.0, n },
            traj: 0,
            seed: 0,
            samples: series
                .iter()
                .map(|&(t, v)| ObservableSample {
                    t,
                    entanglement: v,
                    magic: Some(v),
                    magic_err: Some(0.0),
                })
                .collect(),
            events: EventCounts::default(),
        }
    }

    #[test]
    fn window_statistics_by_hand() {
        // N = 16: window times 40, 48, 56, 64
        let rec = record(16, &[(8, 100.0), (32, 100.0), (40, 1.0), (48, 2.0), (56, 3.0), (64, 4.0)]);
        let s = steady_state_stats(&[rec]).unwrap();
        assert_eq!(s.window_count, 4);
        assert!((s.entanglement.mean - 2.5).abs() < 1e-15);
        let raw = (5.0f64 / 3.0).sqrt();
        assert!((s.entanglement.raw_std - raw).abs() < 1e-15);
        assert!((s.entanglement.rescaled_std - raw / 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_and_short_series() {
        let rec = record(8, &[(24, 3.0), (32, 3.0)]);
        let s = steady_state_stats(&[rec]).unwrap();
        assert_eq!((s.entanglement.mean, s.entanglement.raw_std), (3.0, 0.0));
        let short = record(8, &[(32, 3.0)]);
        assert!(matches!(steady_state_stats(&[short]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn window_count_is_quarter_n() {
        for n in [8usize, 12, 16, 24, 32, 48, 64] {
            let count = (8..=4 * n).step_by(8).filter(|&t| in_window(t, n)).count();
            assert_eq!(count, n / 4, "N = {n}");
        }
    }

    #[test]
    fn sweep_reproducible_and_excludes() {
        let cfg = config(EngineKind::Mps, 4);
        let a = run_sweep(&cfg, 1, None).unwrap();
        let b = run_sweep(&cfg, 2, None).unwrap();
        assert_eq!(a.points.len(), 1);
        assert_eq!(a.excluded.len(), 1);
        assert_eq!(a.points[0].1.len(), 4);
        assert_eq!(a.points, b.points);
        let rows = aggregate(&cfg, &a).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].is_present() && rows[1].is_present());
        assert!(!rows[2].is_present() && rows[2].n_traj == 0);
    }

    #[test]
    fn raw_csv_round_trip() {
        let cfg = config(EngineKind::Mps, 2);
        let out = run_sweep(&cfg, 1, None).unwrap();
        let recs: Vec<_> = out.records().cloned().collect();
        let mut buf = Vec::new();
        write_raw_csv(&mut buf, &recs).unwrap();
        let back = read_raw(&buf[..]).unwrap();
        assert_eq!(back.len(), recs.len());
        for (x, y) in back.iter().zip(&recs) {
            assert_eq!(x.samples, y.samples);
            assert_eq!((x.traj, x.seed), (y.traj, y.seed));
        }
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("eta,p,beta,N,traj,seed,t,entanglement,magic,magic_err\n"));
    }

    #[test]
    fn tableau_rows_have_empty_magic() {
        let mut cfg = config(EngineKind::Tableau, 2);
        cfg.grid.eta_values = vec![0.0];
        let out = run_sweep(&cfg, 1, None).unwrap();
        let recs: Vec<_> = out.records().cloned().collect();
        let mut buf = Vec::new();
        write_raw_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().skip(1).all(|l| l.ends_with(",,")));
        let rows = aggregate(&cfg, &out).unwrap();
        assert!(rows.iter().all(|r| r.quantity == Quantity::Entanglement));
    }

    #[test]
    fn bad_exclusion_rejected() {
        let mut cfg = config(EngineKind::Mps, 2);
        cfg.grid.exclusions = vec![(0.5, 8)];
        assert!(cfg.validate().is_err());
    }
}
