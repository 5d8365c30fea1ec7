//! CMAPSS run-to-failure ingestion: parsing, per-sensor normalization,
//! sliding windows with RUL labels, engine-level splits, and a binary cache.
//!
//! # Cache layout
//!
//! Little-endian throughout.
//!
//! ```text
//! magic        8 bytes  "IEOPDMDS"
//! version      u32      1
//! config hash  32 bytes SHA-256 of the data config and raw source
//! feature_dim  u32
//! then twice (train, eval):
//!   count      u64
//!   count x { unit_id u32, label u32, features f64 * feature_dim }
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const N_OP_SETTINGS: usize = 3;
pub const N_SENSORS: usize = 21;
pub const N_COLUMNS: usize = 2 + N_OP_SETTINGS + N_SENSORS;

/// Sensors conventionally treated as informative for FD001 (1-based).
pub const DEFAULT_SENSORS: [usize; 14] = [2, 3, 4, 7, 8, 9, 11, 12, 13, 14, 15, 17, 20, 21];

#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub unit_id: u32,
    pub cycle: u32,
    pub op_settings: [f64; N_OP_SETTINGS],
    pub sensors: [f64; N_SENSORS],
}

/// One engine's trajectory, rows ordered by cycle starting at 1.
#[derive(Clone, Debug, PartialEq)]
pub struct EngineSeries {
    pub unit_id: u32,
    pub op_settings: Vec<[f64; N_OP_SETTINGS]>,
    pub sensors: Vec<[f64; N_SENSORS]>,
}

impl EngineSeries {
    pub fn lifetime(&self) -> u32 {
        self.sensors.len() as u32
    }
}

pub fn parse_record(line: &str, line_no: usize) -> Result<RawRecord> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != N_COLUMNS {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected {N_COLUMNS} columns, found {}", fields.len()),
        });
    }
    let num = |i: usize| -> Result<f64> {
        fields[i].parse::<f64>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("column {} is not numeric: {:?}", i + 1, fields[i]),
        })
    };
    let int = |i: usize| -> Result<u32> {
        let v = num(i)?;
        if v < 1.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "column {} must be a positive integer: {:?}",
                    i + 1,
                    fields[i]
                ),
            });
        }
        Ok(v as u32)
    };
    let mut op_settings = [0.0; N_OP_SETTINGS];
    for (k, o) in op_settings.iter_mut().enumerate() {
        *o = num(2 + k)?;
    }
    let mut sensors = [0.0; N_SENSORS];
    for (k, s) in sensors.iter_mut().enumerate() {
        *s = num(2 + N_OP_SETTINGS + k)?;
    }
    Ok(RawRecord {
        unit_id: int(0)?,
        cycle: int(1)?,
        op_settings,
        sensors,
    })
}

/// Parse CMAPSS text. Blank lines are skipped; units are returned in id order.
pub fn parse_cmapss_reader<R: BufRead>(reader: R) -> Result<Vec<EngineSeries>> {
    let mut by_unit: BTreeMap<u32, Vec<(usize, RawRecord)>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_record(&line, i + 1)?;
        by_unit.entry(rec.unit_id).or_default().push((i + 1, rec));
    }
    let mut out = Vec::with_capacity(by_unit.len());
    for (unit_id, mut rows) in by_unit {
        rows.sort_by_key(|(_, r)| r.cycle);
        for (expected, (line, r)) in rows.iter().enumerate() {
            if r.cycle as usize != expected + 1 {
                return Err(Error::Parse {
                    line: *line,
                    message: format!(
                        "unit {unit_id}: expected cycle {}, found {}",
                        expected + 1,
                        r.cycle
                    ),
                });
            }
        }
        out.push(EngineSeries {
            unit_id,
            op_settings: rows.iter().map(|(_, r)| r.op_settings).collect(),
            sensors: rows.iter().map(|(_, r)| r.sensors).collect(),
        });
    }
    Ok(out)
}

pub fn parse_cmapss_str(text: &str) -> Result<Vec<EngineSeries>> {
    parse_cmapss_reader(text.as_bytes())
}

pub fn parse_cmapss(path: &Path) -> Result<Vec<EngineSeries>> {
    let file = std::fs::File::open(path)?;
    parse_cmapss_reader(std::io::BufReader::new(file))
}

/// Write engines in CMAPSS text format (space-separated, one row per cycle).
pub fn write_cmapss<W: Write>(engines: &[EngineSeries], mut w: W) -> Result<()> {
    for e in engines {
        for (c, (ops, sensors)) in e.op_settings.iter().zip(&e.sensors).enumerate() {
            write!(w, "{} {}", e.unit_id, c + 1)?;
            for v in ops.iter().chain(sensors.iter()) {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub window: usize,
    pub stride: usize,
    /// 1-based sensor indices.
    pub sensor_ids: Vec<usize>,
    pub cap: Option<u32>,
    pub filter_max: Option<u32>,
    pub horizon: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            window: 30,
            stride: 1,
            sensor_ids: DEFAULT_SENSORS.to_vec(),
            cap: None,
            filter_max: None,
            horizon: 150,
        }
    }
}

impl DataConfig {
    pub fn feature_dim(&self) -> usize {
        self.window * self.sensor_ids.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::Config("window and stride must be positive".into()));
        }
        if self.sensor_ids.is_empty() {
            return Err(Error::Config("at least one sensor must be selected".into()));
        }
        if let Some(bad) = self.sensor_ids.iter().find(|s| **s == 0 || **s > N_SENSORS) {
            return Err(Error::Config(format!(
                "sensor index {bad} outside 1..={N_SENSORS}"
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if matches!(self.cap, Some(0)) {
            return Err(Error::Config("cap must be positive".into()));
        }
        Ok(())
    }
}

/// Per-sensor min-max statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub sensor_ids: Vec<usize>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn fit(series: &[EngineSeries], sensor_ids: &[usize]) -> Result<Self> {
        let mut min = vec![f64::INFINITY; sensor_ids.len()];
        let mut max = vec![f64::NEG_INFINITY; sensor_ids.len()];
        for row in series.iter().flat_map(|s| &s.sensors) {
            for (j, &sid) in sensor_ids.iter().enumerate() {
                let v = row[sid - 1];
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        for (j, &sid) in sensor_ids.iter().enumerate() {
            if !(max[j] > min[j]) {
                return Err(Error::Config(format!(
                    "sensor {sid} has zero range on the training engines; choose different sensors"
                )));
            }
        }
        Ok(Self {
            sensor_ids: sensor_ids.to_vec(),
            min,
            max,
        })
    }

    /// Selected sensors of one row, mapped into `[0, 1]`.
    pub fn apply_row(&self, row: &[f64; N_SENSORS], out: &mut Vec<f64>) {
        for (j, &sid) in self.sensor_ids.iter().enumerate() {
            let v = (row[sid - 1] - self.min[j]) / (self.max[j] - self.min[j]);
            out.push(v.clamp(0.0, 1.0));
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub unit_id: u32,
    /// Row-major `window x sensors`, oldest row first.
    pub features: Vec<f64>,
    pub label: u32,
}

/// Sliding windows over one engine. The label of a window ending at cycle
/// `e` is `lifetime - e + 1`, so the final window is labelled 1. Returns
/// `None` when the series is shorter than the window.
pub fn make_windows(
    series: &EngineSeries,
    normalizer: &Normalizer,
    config: &DataConfig,
) -> Option<Vec<WindowSample>> {
    let n = series.sensors.len();
    if n < config.window {
        return None;
    }
    let normalized: Vec<Vec<f64>> = series
        .sensors
        .iter()
        .map(|row| {
            let mut v = Vec::with_capacity(normalizer.sensor_ids.len());
            normalizer.apply_row(row, &mut v);
            v
        })
        .collect();
    let lifetime = n as u32;
    let mut out = Vec::new();
    for end in (config.window..=n).step_by(config.stride) {
        let mut label = (lifetime - end as u32 + 1).max(1);
        if let Some(max) = config.filter_max {
            if label > max {
                continue;
            }
        }
        if let Some(cap) = config.cap {
            label = label.min(cap);
        }
        let label = label.min(config.horizon);
        let mut features = Vec::with_capacity(config.feature_dim());
        for row in &normalized[end - config.window..end] {
            features.extend_from_slice(row);
        }
        out.push(WindowSample {
            unit_id: series.unit_id,
            features,
            label,
        });
    }
    Some(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// All engines for training and evaluation; labels above 125 dropped.
    Base,
    /// First 20 engines held out; labels above 125 dropped.
    #[value(name = "short")]
    ShortTerm,
    /// First 20 engines held out; labels capped at 125.
    #[value(name = "long")]
    LongTerm,
}

impl CaseKind {
    pub fn name(&self) -> &'static str {
        match self {
            CaseKind::Base => "base",
            CaseKind::ShortTerm => "short",
            CaseKind::LongTerm => "long",
        }
    }

    /// Window config of this case on top of `base`.
    pub fn data_config(&self, base: &DataConfig) -> DataConfig {
        let mut c = base.clone();
        match self {
            CaseKind::Base | CaseKind::ShortTerm => {
                c.filter_max = Some(125);
                c.cap = None;
            }
            CaseKind::LongTerm => {
                c.filter_max = None;
                c.cap = Some(125);
            }
        }
        c
    }
}

pub const HOLDOUT_ENGINES: usize = 20;

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub case: CaseKind,
    pub config: DataConfig,
    pub train: Vec<WindowSample>,
    pub eval: Vec<WindowSample>,
    pub train_units: Vec<u32>,
    pub eval_units: Vec<u32>,
    /// Engines skipped because they are shorter than the window.
    pub skipped_engines: usize,
}

impl DatasetSplit {
    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }
}

/// Build the train/eval split of a case. Engines are ordered by unit id; the
/// hold-out cases evaluate on the first 20.
pub fn make_split(
    engines: &[EngineSeries],
    case: CaseKind,
    base: &DataConfig,
) -> Result<DatasetSplit> {
    make_split_with(engines, case, case.data_config(base))
}

/// Like [`make_split`] but uses `config` as given, without the case's cap and filter.
pub fn make_split_with(
    engines: &[EngineSeries],
    case: CaseKind,
    config: DataConfig,
) -> Result<DatasetSplit> {
    config.validate()?;
    let mut sorted: Vec<&EngineSeries> = engines.iter().collect();
    sorted.sort_by_key(|e| e.unit_id);
    let (train_engines, eval_engines): (Vec<EngineSeries>, Vec<EngineSeries>) = match case {
        CaseKind::Base => {
            if sorted.is_empty() {
                return Err(Error::InsufficientData("no engines".into()));
            }
            let all: Vec<EngineSeries> = sorted.into_iter().cloned().collect();
            (all.clone(), all)
        }
        CaseKind::ShortTerm | CaseKind::LongTerm => {
            if sorted.len() <= HOLDOUT_ENGINES {
                return Err(Error::InsufficientData(format!(
                    "{} engines, need more than {HOLDOUT_ENGINES} for a hold-out split",
                    sorted.len()
                )));
            }
            let eval = sorted[..HOLDOUT_ENGINES]
                .iter()
                .map(|e| (*e).clone())
                .collect();
            let train = sorted[HOLDOUT_ENGINES..]
                .iter()
                .map(|e| (*e).clone())
                .collect();
            (train, eval)
        }
    };
    let normalizer = Normalizer::fit(&train_engines, &config.sensor_ids)?;
    let mut skipped = 0usize;
    let mut windows = |engines: &[EngineSeries]| -> Vec<WindowSample> {
        let mut out = Vec::new();
        for e in engines {
            match make_windows(e, &normalizer, &config) {
                Some(w) => out.extend(w),
                None => skipped += 1,
            }
        }
        out
    };
    let train = windows(&train_engines);
    let eval = if case == CaseKind::Base {
        train.clone()
    } else {
        windows(&eval_engines)
    };
    if skipped > 0 {
        log::warn!("{skipped} engines shorter than the window were skipped");
    }
    if train.is_empty() || eval.is_empty() {
        return Err(Error::InsufficientData("split produced no windows".into()));
    }
    Ok(DatasetSplit {
        case,
        train_units: train_engines.iter().map(|e| e.unit_id).collect(),
        eval_units: eval_engines.iter().map(|e| e.unit_id).collect(),
        config,
        train,
        eval,
        skipped_engines: skipped,
    })
}

/// SHA-256 of a data config, case, and source fingerprint.
pub fn config_hash(config: &DataConfig, case: CaseKind, source: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    h.update(case.name().as_bytes());
    h.update(source);
    let digest = h.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

const CACHE_MAGIC: &[u8; 8] = b"IEOPDMDS";
const CACHE_VERSION: u32 = 1;

pub fn write_cache<W: Write>(split: &DatasetSplit, hash: &[u8; 32], mut w: W) -> Result<()> {
    let dim = split.feature_dim();
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(hash)?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    for set in [&split.train, &split.eval] {
        w.write_all(&(set.len() as u64).to_le_bytes())?;
        for s in set {
            w.write_all(&s.unit_id.to_le_bytes())?;
            w.write_all(&s.label.to_le_bytes())?;
            for v in &s.features {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Samples of a cache file whose hash equals `expected`, or `None` if the
/// hash differs (stale cache).
pub fn read_cache<R: Read>(
    mut r: R,
    expected: &[u8; 32],
) -> Result<Option<(Vec<WindowSample>, Vec<WindowSample>)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Checkpoint("not a dataset cache".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    if u32::from_le_bytes(word) != CACHE_VERSION {
        return Ok(None);
    }
    let mut hash = [0u8; 32];
    r.read_exact(&mut hash)?;
    if &hash != expected {
        return Ok(None);
    }
    r.read_exact(&mut word)?;
    let dim = u32::from_le_bytes(word) as usize;
    let read_set = |r: &mut R| -> Result<Vec<WindowSample>> {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let n = u64::from_le_bytes(len) as usize;
        let mut out = Vec::with_capacity(n);
        let mut buf = vec![0u8; 8 + dim * 8];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            let unit_id = u32::from_le_bytes(buf[0..4].try_into().expect("4 bytes"));
            let label = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes"));
            let features = buf[8..]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            out.push(WindowSample {
                unit_id,
                features,
                label,
            });
        }
        Ok(out)
    };
    let train = read_set(&mut r)?;
    let eval = read_set(&mut r)?;
    Ok(Some((train, eval)))
}

/// Where the engines come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    File { path: PathBuf },
    Surrogate { seed: u64 },
}

impl DataSource {
    pub fn describe(&self) -> String {
        match self {
            DataSource::File { path } => format!("file {}", path.display()),
            DataSource::Surrogate { seed } => {
                format!("surrogate FD001-format generator (seed {seed})")
            }
        }
    }
}

pub const FD001_TRAIN: &str = "train_FD001.txt";
pub const DATA_DIR_ENV: &str = "CMAPSS_DIR";

/// Locate `train_FD001.txt`: an explicit directory first, then the
/// `CMAPSS_DIR` environment variable.
pub fn locate_fd001(data_dir: Option<&Path>) -> Option<PathBuf> {
    let env_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    data_dir
        .map(Path::to_path_buf)
        .into_iter()
        .chain(env_dir)
        .map(|d| if d.is_file() { d } else { d.join(FD001_TRAIN) })
        .find(|p| p.is_file())
}

/// Resolve and load engines. An explicit directory that lacks the file is an
/// error; without one the surrogate generator is used.
pub fn load_engines(
    data_dir: Option<&Path>,
    surrogate_seed: u64,
) -> Result<(Vec<EngineSeries>, DataSource)> {
    match locate_fd001(data_dir) {
        Some(path) => {
            let engines = parse_cmapss(&path)?;
            Ok((engines, DataSource::File { path }))
        }
        None => {
            if let Some(d) = data_dir {
                return Err(Error::InsufficientData(format!(
                    "{} not found under {}",
                    FD001_TRAIN,
                    d.display()
                )));
            }
            log::warn!("no CMAPSS data found; using the FD001-format surrogate generator");
            let engines = crate::surrogate::generate(
                &crate::surrogate::SurrogateConfig::fd001_like(surrogate_seed),
            )?;
            Ok((
                engines,
                DataSource::Surrogate {
                    seed: surrogate_seed,
                },
            ))
        }
    }
}
