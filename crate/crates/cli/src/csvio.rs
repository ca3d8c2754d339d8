//! CSV and JSON readers/writers for every artifact the pipeline touches.
//!
//! All tabular formats are CSV with declared headers; floats are written in
//! shortest round-trip form so a read-back reproduces the original bits and
//! reruns are byte-identical. Files are written atomically: content goes to
//! a temporary file in the destination directory which is renamed into
//! place only when complete.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use climpanel_core::panel::{PanelDataset, PanelRow};
use climpanel_core::projection::{GrowthKind, Linkage, ProjectionRun, Rcp, SspPath};
use climpanel_core::selection::CandidateBinConfig;
use climpanel_core::weather::{
    AnnualRegressorSet, GridHourlySeries, GridSet, PopulationWeight, WeightMap,
};

use crate::error::{CliError, Result};

pub const HOURLY_FILE: &str = "hourly_temperature.csv";
pub const DAILY_FILE: &str = "daily_precipitation.csv";
pub const CELL_WEIGHTS_FILE: &str = "cell_weights.csv";
pub const POPULATION_WEIGHTS_FILE: &str = "population_weights.csv";

// ---------------------------------------------------------------------------
// Atomic writes and digests
// ---------------------------------------------------------------------------

/// Writes `bytes` to `path` atomically (temp file + rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| CliError::config(e.to_string()))?;
    Ok(())
}

/// Streaming variant of [`atomic_write`] for large outputs.
pub struct AtomicFile {
    tmp: Option<tempfile::NamedTempFile>,
    path: PathBuf,
}

impl AtomicFile {
    pub fn create(path: &Path) -> Result<Self> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        Ok(Self { tmp: Some(tempfile::NamedTempFile::new_in(dir)?), path: path.to_path_buf() })
    }

    pub fn writer(&mut self) -> impl Write + '_ {
        BufWriter::new(self.tmp.as_mut().expect("atomic file already finished"))
    }

    pub fn finish(mut self) -> Result<()> {
        let tmp = self.tmp.take().expect("atomic file already finished");
        tmp.persist(&self.path).map_err(|e| CliError::config(e.to_string()))?;
        Ok(())
    }
}

/// Hex-encoded SHA-256 of a file's contents.
pub fn sha256_hex(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn bad_row(path: &Path, line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::validation(format!("{}:{line}: {msg}", path.display()))
}

fn parse_f64(path: &Path, line: u64, field: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| bad_row(path, line, format!("{field}: not a number: {raw:?}")))
}

fn parse_i32(path: &Path, line: u64, field: &str, raw: &str) -> Result<i32> {
    raw.trim()
        .parse::<i32>()
        .map_err(|_| bad_row(path, line, format!("{field}: not an integer: {raw:?}")))
}

// ---------------------------------------------------------------------------
// Gridded weather
// ---------------------------------------------------------------------------

/// Raw per-cell weather before validation, the writer-side payload.
#[derive(Debug, Clone, Default)]
pub struct RawCell {
    pub lat: f64,
    pub lon: f64,
    pub hours: Vec<(NaiveDateTime, f64)>,
    pub days: Vec<(NaiveDate, f64)>,
}

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
const DATE_FORMAT: &str = "%Y-%m-%d";

fn parse_timestamp(path: &Path, line: u64, raw: &str) -> Result<NaiveDateTime> {
    let trimmed = raw.trim().trim_end_matches('Z');
    NaiveDateTime::parse_from_str(trimmed, TS_FORMAT)
        .map_err(|_| bad_row(path, line, format!("timestamp_utc: bad timestamp {raw:?}")))
}

fn parse_date(path: &Path, line: u64, raw: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), DATE_FORMAT)
        .map_err(|_| bad_row(path, line, format!("date: bad date {raw:?}")))
}

/// Reads `hourly_temperature.csv` and `daily_precipitation.csv` under `dir`
/// into validated per-cell series.
pub fn read_grid_dir(dir: &Path) -> Result<GridSet> {
    let hourly = dir.join(HOURLY_FILE);
    let daily = dir.join(DAILY_FILE);
    let mut cells: BTreeMap<String, RawCell> = BTreeMap::new();

    let mut reader = open_reader(&hourly)?;
    expect_headers(&hourly, &mut reader, &["cell_id", "lat", "lon", "timestamp_utc", "temp_c"])?;
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| bad_row(&hourly, line, e))?;
        let cell = cells.entry(record[0].to_string()).or_default();
        cell.lat = parse_f64(&hourly, line, "lat", &record[1])?;
        cell.lon = parse_f64(&hourly, line, "lon", &record[2])?;
        let ts = parse_timestamp(&hourly, line, &record[3])?;
        let temp = parse_f64(&hourly, line, "temp_c", &record[4])?;
        cell.hours.push((ts, temp));
    }

    let mut reader = open_reader(&daily)?;
    expect_headers(&daily, &mut reader, &["cell_id", "date", "precip_mm"])?;
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| bad_row(&daily, line, e))?;
        let cell = cells.entry(record[0].to_string()).or_default();
        let date = parse_date(&daily, line, &record[1])?;
        let precip = parse_f64(&daily, line, "precip_mm", &record[2])?;
        cell.days.push((date, precip));
    }

    let mut set = GridSet::new();
    for (id, raw) in cells {
        let series = GridHourlySeries::new(id.clone(), raw.lat, raw.lon, raw.hours, raw.days)
            .map_err(|e| CliError::from(e).in_file(&hourly))?;
        set.insert(series);
    }
    Ok(set)
}

/// Writes the two grid files under `dir` from raw per-cell series.
pub fn write_grid_dir(dir: &Path, cells: &BTreeMap<String, RawCell>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut hourly = AtomicFile::create(&dir.join(HOURLY_FILE))?;
    {
        let mut w = csv::Writer::from_writer(hourly.writer());
        w.write_record(["cell_id", "lat", "lon", "timestamp_utc", "temp_c"])?;
        for (id, cell) in cells {
            for (ts, temp) in &cell.hours {
                w.write_record([
                    id.as_str(),
                    &cell.lat.to_string(),
                    &cell.lon.to_string(),
                    &format!("{}Z", ts.format(TS_FORMAT)),
                    &temp.to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    hourly.finish()?;

    let mut daily = AtomicFile::create(&dir.join(DAILY_FILE))?;
    {
        let mut w = csv::Writer::from_writer(daily.writer());
        w.write_record(["cell_id", "date", "precip_mm"])?;
        for (id, cell) in cells {
            for (date, precip) in &cell.days {
                w.write_record([
                    id.as_str(),
                    &date.format(DATE_FORMAT).to_string(),
                    &precip.to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    daily.finish()
}

fn expect_headers(path: &Path, reader: &mut csv::Reader<fs::File>, want: &[&str]) -> Result<()> {
    let got = reader.headers().map_err(|e| bad_row(path, 1, e))?;
    let got: Vec<&str> = got.iter().map(str::trim).collect();
    if got != want {
        return Err(bad_row(
            path,
            1,
            format!("header mismatch: expected {want:?}, found {got:?}"),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

/// Reads `cell_weights.csv` and `population_weights.csv` under `dir`.
pub fn read_weights_dir(dir: &Path) -> Result<WeightMap> {
    let cells_path = dir.join(CELL_WEIGHTS_FILE);
    let mut cell_weights: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    let mut reader = open_reader(&cells_path)?;
    expect_headers(&cells_path, &mut reader, &["polygon_id", "cell_id", "w_cj"])?;
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| bad_row(&cells_path, line, e))?;
        let w = parse_f64(&cells_path, line, "w_cj", &record[2])?;
        cell_weights.entry(record[0].to_string()).or_default().push((record[1].to_string(), w));
    }

    let pop_path = dir.join(POPULATION_WEIGHTS_FILE);
    let mut population: BTreeMap<String, Vec<PopulationWeight>> = BTreeMap::new();
    let mut reader = open_reader(&pop_path)?;
    expect_headers(
        &pop_path,
        &mut reader,
        &["province_id", "polygon_id", "year_from", "year_to", "w_jp"],
    )?;
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| bad_row(&pop_path, line, e))?;
        population.entry(record[0].to_string()).or_default().push(PopulationWeight {
            polygon_id: record[1].to_string(),
            year_from: parse_i32(&pop_path, line, "year_from", &record[2])?,
            year_to: parse_i32(&pop_path, line, "year_to", &record[3])?,
            w_jp: parse_f64(&pop_path, line, "w_jp", &record[4])?,
        });
    }

    WeightMap::new(cell_weights, population).map_err(|e| CliError::from(e).in_file(dir))
}

/// Writes the two weight files under `dir` from raw rows.
pub fn write_weights_dir(
    dir: &Path,
    cell_rows: &[(String, String, f64)],
    population_rows: &[(String, String, i32, i32, f64)],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut buf = csv::Writer::from_writer(Vec::new());
    buf.write_record(["polygon_id", "cell_id", "w_cj"])?;
    for (polygon, cell, w) in cell_rows {
        buf.write_record([polygon.as_str(), cell.as_str(), &w.to_string()])?;
    }
    atomic_write(&dir.join(CELL_WEIGHTS_FILE), &into_bytes(buf)?)?;

    let mut buf = csv::Writer::from_writer(Vec::new());
    buf.write_record(["province_id", "polygon_id", "year_from", "year_to", "w_jp"])?;
    for (province, polygon, from, to, w) in population_rows {
        buf.write_record([
            province.as_str(),
            polygon.as_str(),
            &from.to_string(),
            &to.to_string(),
            &w.to_string(),
        ])?;
    }
    atomic_write(&dir.join(POPULATION_WEIGHTS_FILE), &into_bytes(buf)?)
}

fn into_bytes(writer: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    writer.into_inner().map_err(|e| CliError::config(e.to_string()))
}

// ---------------------------------------------------------------------------
// Panel and climate regressor tables
// ---------------------------------------------------------------------------

/// Shape of the regressor columns discovered from a panel or climate
/// header.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSchema {
    pub poly_order: usize,
    pub n_temp_bins: usize,
    pub n_precip_bins: usize,
    pub candidates: Vec<CandidateBinConfig>,
    pub has_outcomes: bool,
    pub has_income: bool,
}

/// One writer-side panel row: regressors plus optional outcome block and
/// per-candidate bin days.
#[derive(Debug, Clone)]
pub struct PanelOutRow {
    pub reg: AnnualRegressorSet,
    pub g: Option<f64>,
    pub region_id: Option<String>,
    pub low_income: Option<bool>,
    pub income_level: Option<f64>,
    pub candidate_bins: Vec<Vec<f64>>,
}

/// A parsed panel file: the dataset, its schema, and any candidate bin-day
/// columns keyed by (province, year).
#[derive(Debug)]
pub struct PanelFile {
    pub dataset: PanelDataset,
    pub schema: PanelSchema,
    pub candidate_bins: Vec<(CandidateBinConfig, BTreeMap<(String, i32), Vec<f64>>)>,
}

fn candidate_label(c: &CandidateBinConfig, bin: usize) -> String {
    format!("cbin_l{}_i{}_b{}", c.lower_edge, c.interval, bin + 1)
}

fn regressor_header(
    poly_order: usize,
    n_temp_bins: usize,
    n_precip_bins: usize,
    candidates: &[(CandidateBinConfig, usize)],
    with_outcomes: bool,
    with_income: bool,
) -> Vec<String> {
    let mut h = vec!["province_id".to_string(), "year".to_string()];
    if with_outcomes {
        h.push("g".to_string());
        h.push("region_id".to_string());
        h.push("low_income".to_string());
        if with_income {
            h.push("income_level".to_string());
        }
    }
    h.push("days".to_string());
    for m in 1..=poly_order {
        h.push(format!("temp{m}"));
    }
    for b in 1..=n_temp_bins {
        h.push(format!("tbin{b}"));
    }
    h.push("hdd".to_string());
    h.push("cdd".to_string());
    h.push("precip".to_string());
    h.push("precip_sq".to_string());
    for b in 1..=n_precip_bins {
        h.push(format!("rbin{b}"));
    }
    for (c, n_bins) in candidates {
        for b in 0..*n_bins {
            h.push(candidate_label(c, b));
        }
    }
    h
}

/// Writes a panel (or climate) table. Candidate columns follow the fixed
/// regressor block; rows must agree in shape.
pub fn write_panel(path: &Path, rows: &[PanelOutRow]) -> Result<()> {
    write_panel_with_candidates(path, rows, &[])
}

/// [`write_panel`] with candidate bin-day columns appended.
pub fn write_panel_with_candidates(
    path: &Path,
    rows: &[PanelOutRow],
    candidates: &[CandidateBinConfig],
) -> Result<()> {
    let first = rows.first().ok_or_else(|| CliError::validation("no rows to write"))?;
    if first.candidate_bins.len() != candidates.len() {
        return Err(CliError::config("candidate bins do not match candidate configs"));
    }
    let with_outcomes = first.g.is_some();
    let with_income = first.income_level.is_some();
    let sized: Vec<(CandidateBinConfig, usize)> = candidates
        .iter()
        .zip(&first.candidate_bins)
        .map(|(c, days)| (c.clone(), days.len()))
        .collect();
    let header = regressor_header(
        first.reg.poly_terms.len(),
        first.reg.bin_days.len(),
        first.reg.precip_bin_days.len(),
        &sized,
        with_outcomes,
        with_income,
    );
    write_panel_inner(path, rows, &header, with_outcomes, with_income)
}

fn write_panel_inner(
    path: &Path,
    rows: &[PanelOutRow],
    header: &[String],
    with_outcomes: bool,
    with_income: bool,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        record.push(row.reg.province_id.clone());
        record.push(row.reg.year.to_string());
        if with_outcomes {
            record.push(row.g.ok_or_else(|| CliError::validation("row missing outcome"))?.to_string());
            record.push(row.region_id.clone().unwrap_or_default());
            record.push(if row.low_income.unwrap_or(false) { "1" } else { "0" }.to_string());
            if with_income {
                record.push(
                    row.income_level
                        .ok_or_else(|| CliError::validation("row missing income_level"))?
                        .to_string(),
                );
            }
        }
        record.push(climpanel_core::weather::days_in_year(row.reg.year).to_string());
        for v in &row.reg.poly_terms {
            record.push(v.to_string());
        }
        for v in &row.reg.bin_days {
            record.push(v.to_string());
        }
        record.push(row.reg.hdd.to_string());
        record.push(row.reg.cdd.to_string());
        record.push(row.reg.precip_linear.to_string());
        record.push(row.reg.precip_sq.to_string());
        for v in &row.reg.precip_bin_days {
            record.push(v.to_string());
        }
        for days in &row.candidate_bins {
            for v in days {
                record.push(v.to_string());
            }
        }
        if record.len() != header.len() {
            return Err(CliError::validation(format!(
                "{} {}: row has {} fields, header has {}",
                row.reg.province_id,
                row.reg.year,
                record.len(),
                header.len()
            )));
        }
        w.write_record(&record)?;
    }
    atomic_write(path, &into_bytes(w)?)
}

struct SchemaIndex {
    schema: PanelSchema,
    idx_g: Option<usize>,
    idx_region: Option<usize>,
    idx_low: Option<usize>,
    idx_income: Option<usize>,
    idx_poly: Vec<usize>,
    idx_tbin: Vec<usize>,
    idx_rbin: Vec<usize>,
    idx_hdd: usize,
    idx_cdd: usize,
    idx_precip: usize,
    idx_precip_sq: usize,
    idx_candidates: Vec<(CandidateBinConfig, Vec<usize>)>,
}

fn index_header(path: &Path, header: &csv::StringRecord) -> Result<SchemaIndex> {
    let mut by_name: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, name) in header.iter().enumerate() {
        if by_name.insert(name.trim(), i).is_some() {
            return Err(bad_row(path, 1, format!("duplicate column {name:?}")));
        }
    }
    let need = |name: &str| {
        by_name.get(name).copied().ok_or_else(|| bad_row(path, 1, format!("missing column {name}")))
    };
    need("province_id")?;
    need("year")?;
    let mut idx_poly = Vec::new();
    while let Some(i) = by_name.get(format!("temp{}", idx_poly.len() + 1).as_str()) {
        idx_poly.push(*i);
    }
    if idx_poly.is_empty() {
        return Err(bad_row(path, 1, "missing column temp1"));
    }
    let mut idx_tbin = Vec::new();
    while let Some(i) = by_name.get(format!("tbin{}", idx_tbin.len() + 1).as_str()) {
        idx_tbin.push(*i);
    }
    let mut idx_rbin = Vec::new();
    while let Some(i) = by_name.get(format!("rbin{}", idx_rbin.len() + 1).as_str()) {
        idx_rbin.push(*i);
    }
    // Candidate columns: cbin_l{lower}_i{interval}_b{k}, grouped by
    // configuration in ascending bin order.
    let mut candidate_cols: BTreeMap<(String, String), Vec<(usize, usize)>> = BTreeMap::new();
    for (name, i) in &by_name {
        if let Some(rest) = name.strip_prefix("cbin_l") {
            let parts: Vec<&str> = rest.split('_').collect();
            if parts.len() == 3 && parts[1].starts_with('i') && parts[2].starts_with('b') {
                let lower = parts[0].to_string();
                let interval = parts[1][1..].to_string();
                let bin: usize = parts[2][1..]
                    .parse()
                    .map_err(|_| bad_row(path, 1, format!("bad candidate column {name}")))?;
                candidate_cols.entry((lower, interval)).or_default().push((bin, *i));
            } else {
                return Err(bad_row(path, 1, format!("bad candidate column {name}")));
            }
        }
    }
    let mut idx_candidates = Vec::new();
    for ((lower, interval), mut cols) in candidate_cols {
        cols.sort_unstable();
        if cols.iter().enumerate().any(|(k, (bin, _))| *bin != k + 1) {
            return Err(bad_row(
                path,
                1,
                format!("candidate cbin_l{lower}_i{interval} has gaps in its bin columns"),
            ));
        }
        let lower: f64 = lower
            .parse()
            .map_err(|_| bad_row(path, 1, format!("bad candidate lower edge {lower}")))?;
        let interval: f64 = interval
            .parse()
            .map_err(|_| bad_row(path, 1, format!("bad candidate interval {interval}")))?;
        let config = CandidateBinConfig::new(lower, interval).map_err(|e| bad_row(path, 1, e))?;
        if cols.len() != config.edges().len() + 1 {
            return Err(bad_row(
                path,
                1,
                format!(
                    "candidate {} has {} bin columns, expected {}",
                    config.label(),
                    cols.len(),
                    config.edges().len() + 1
                ),
            ));
        }
        idx_candidates.push((config, cols.into_iter().map(|(_, i)| i).collect()));
    }

    let idx_g = by_name.get("g").copied();
    let schema = PanelSchema {
        poly_order: idx_poly.len(),
        n_temp_bins: idx_tbin.len(),
        n_precip_bins: idx_rbin.len(),
        candidates: idx_candidates.iter().map(|(c, _)| c.clone()).collect(),
        has_outcomes: idx_g.is_some(),
        has_income: by_name.contains_key("income_level"),
    };
    Ok(SchemaIndex {
        schema,
        idx_g,
        idx_region: by_name.get("region_id").copied(),
        idx_low: by_name.get("low_income").copied(),
        idx_income: by_name.get("income_level").copied(),
        idx_poly,
        idx_tbin,
        idx_rbin,
        idx_hdd: need("hdd")?,
        idx_cdd: need("cdd")?,
        idx_precip: need("precip")?,
        idx_precip_sq: need("precip_sq")?,
        idx_candidates,
    })
}

fn read_regressor_row(
    path: &Path,
    line: u64,
    record: &csv::StringRecord,
    idx: &SchemaIndex,
) -> Result<AnnualRegressorSet> {
    let pull = |i: usize, field: &str| parse_f64(path, line, field, &record[i]);
    let mut poly_terms = Vec::with_capacity(idx.idx_poly.len());
    for (m, i) in idx.idx_poly.iter().enumerate() {
        poly_terms.push(pull(*i, &format!("temp{}", m + 1))?);
    }
    let mut bin_days = Vec::with_capacity(idx.idx_tbin.len());
    for (b, i) in idx.idx_tbin.iter().enumerate() {
        bin_days.push(pull(*i, &format!("tbin{}", b + 1))?);
    }
    let mut precip_bin_days = Vec::with_capacity(idx.idx_rbin.len());
    for (b, i) in idx.idx_rbin.iter().enumerate() {
        precip_bin_days.push(pull(*i, &format!("rbin{}", b + 1))?);
    }
    Ok(AnnualRegressorSet {
        province_id: record[0].to_string(),
        year: parse_i32(path, line, "year", &record[1])?,
        poly_terms,
        bin_days,
        hdd: pull(idx.idx_hdd, "hdd")?,
        cdd: pull(idx.idx_cdd, "cdd")?,
        precip_linear: pull(idx.idx_precip, "precip")?,
        precip_sq: pull(idx.idx_precip_sq, "precip_sq")?,
        precip_bin_days,
    })
}

/// Reads a full panel with outcomes into a validated dataset.
pub fn read_panel(path: &Path) -> Result<PanelFile> {
    let mut reader = open_reader(path)?;
    let header = reader.headers().map_err(|e| bad_row(path, 1, e))?.clone();
    let idx = index_header(path, &header)?;
    if !idx.schema.has_outcomes {
        return Err(bad_row(path, 1, "panel file lacks outcome column g"));
    }
    let idx_g = idx.idx_g.expect("has_outcomes");
    let idx_region =
        idx.idx_region.ok_or_else(|| bad_row(path, 1, "panel file lacks region_id"))?;
    let idx_low =
        idx.idx_low.ok_or_else(|| bad_row(path, 1, "panel file lacks low_income"))?;
    let mut rows = Vec::new();
    let mut candidate_bins: Vec<(CandidateBinConfig, BTreeMap<(String, i32), Vec<f64>>)> =
        idx.idx_candidates.iter().map(|(c, _)| (c.clone(), BTreeMap::new())).collect();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| bad_row(path, line, e))?;
        let reg = read_regressor_row(path, line, &record, &idx)?;
        let low_raw = record[idx_low].trim();
        let low_income = match low_raw {
            "0" | "false" => false,
            "1" | "true" => true,
            other => return Err(bad_row(path, line, format!("low_income: bad flag {other:?}"))),
        };
        let income_level = match idx.idx_income {
            Some(j) if !record[j].trim().is_empty() => {
                Some(parse_f64(path, line, "income_level", &record[j])?)
            }
            _ => None,
        };
        for ((_, store), (_, cols)) in candidate_bins.iter_mut().zip(&idx.idx_candidates) {
            let mut days = Vec::with_capacity(cols.len());
            for c in cols {
                days.push(parse_f64(path, line, "candidate bin", &record[*c])?);
            }
            store.insert((reg.province_id.clone(), reg.year), days);
        }
        rows.push(PanelRow {
            province_id: reg.province_id.clone(),
            year: reg.year,
            g: parse_f64(path, line, "g", &record[idx_g])?,
            region_id: record[idx_region].to_string(),
            low_income,
            income_level,
            regressors: reg,
            sector_growth: BTreeMap::new(),
        });
    }
    let dataset = PanelDataset::new(rows).map_err(|e| CliError::from(e).in_file(path))?;
    Ok(PanelFile { dataset, schema: idx.schema, candidate_bins })
}

/// Reads a regressor-only table (climate files, or panels before outcome
/// merge) keyed by (province, year).
pub fn read_regressors(
    path: &Path,
) -> Result<(BTreeMap<(String, i32), AnnualRegressorSet>, PanelSchema)> {
    let mut reader = open_reader(path)?;
    let header = reader.headers().map_err(|e| bad_row(path, 1, e))?.clone();
    let idx = index_header(path, &header)?;
    let mut out = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| bad_row(path, line, e))?;
        let reg = read_regressor_row(path, line, &record, &idx)?;
        let key = (reg.province_id.clone(), reg.year);
        if out.insert(key, reg).is_some() {
            return Err(bad_row(path, line, "duplicate (province, year)"));
        }
    }
    Ok((out, idx.schema))
}

// ---------------------------------------------------------------------------
// Growth inputs
// ---------------------------------------------------------------------------

/// Contents of `growth.csv`: a tagged record store covering baseline-growth
/// overrides, 2022 levels, SSP linkage coefficients, and SSP country paths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GrowthFile {
    pub baseline_override: BTreeMap<String, f64>,
    pub level_2022: BTreeMap<String, f64>,
    pub linkage: BTreeMap<String, Linkage>,
    pub ssp_points: BTreeMap<String, Vec<(i32, f64)>>,
}

impl GrowthFile {
    /// Assembles the country path for one SSP kind, validating five-year
    /// spacing.
    pub fn ssp_path(&self, kind: GrowthKind) -> Result<SspPath> {
        let points = self.ssp_points.get(kind.as_str()).ok_or_else(|| {
            CliError::validation(format!("growth file has no ssp_path records for {}", kind.as_str()))
        })?;
        let mut points = points.clone();
        points.sort_unstable_by_key(|(y, _)| *y);
        if points.windows(2).any(|w| w[1].0 - w[0].0 != 5) {
            return Err(CliError::validation(format!(
                "{} path years are not spaced five years apart",
                kind.as_str()
            )));
        }
        let first_year = points[0].0;
        let gdpcap: Vec<f64> = points.iter().map(|(_, v)| *v).collect();
        Ok(SspPath::new(first_year, gdpcap)?)
    }
}

pub fn read_growth(path: &Path) -> Result<GrowthFile> {
    let mut reader = open_reader(path)?;
    expect_headers(path, &mut reader, &["record", "key", "year", "value", "aux"])?;
    let mut out = GrowthFile::default();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| bad_row(path, line, e))?;
        let key = record[1].to_string();
        let value = parse_f64(path, line, "value", &record[3])?;
        match &record[0] {
            "baseline_growth" => {
                out.baseline_override.insert(key, value);
            }
            "level_2022" => {
                out.level_2022.insert(key, value);
            }
            "linkage" => {
                let slope = parse_f64(path, line, "aux", &record[4])?;
                out.linkage.insert(key, Linkage { intercept: value, slope });
            }
            "ssp_path" => {
                let year = parse_i32(path, line, "year", &record[2])?;
                out.ssp_points.entry(key).or_default().push((year, value));
            }
            other => return Err(bad_row(path, line, format!("unknown record type {other:?}"))),
        }
    }
    Ok(out)
}

pub fn write_growth(path: &Path, growth: &GrowthFile) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["record", "key", "year", "value", "aux"])?;
    for (k, v) in &growth.baseline_override {
        w.write_record(["baseline_growth", k, "", &v.to_string(), ""])?;
    }
    for (k, v) in &growth.level_2022 {
        w.write_record(["level_2022", k, "", &v.to_string(), ""])?;
    }
    for (k, l) in &growth.linkage {
        w.write_record(["linkage", k, "", &l.intercept.to_string(), &l.slope.to_string()])?;
    }
    for (kind, points) in &growth.ssp_points {
        for (year, v) in points {
            w.write_record(["ssp_path", kind, &year.to_string(), &v.to_string(), ""])?;
        }
    }
    atomic_write(path, &into_bytes(w)?)
}

// ---------------------------------------------------------------------------
// Shares and candidates
// ---------------------------------------------------------------------------

pub fn read_shares(path: &Path) -> Result<Vec<(String, String, u64)>> {
    let mut reader = open_reader(path)?;
    expect_headers(path, &mut reader, &["province_id", "region_id", "population"])?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| bad_row(path, line, e))?;
        let pop: u64 = record[2]
            .trim()
            .parse()
            .map_err(|_| bad_row(path, line, format!("population: bad count {:?}", &record[2])))?;
        out.push((record[0].to_string(), record[1].to_string(), pop));
    }
    Ok(out)
}

pub fn write_shares(path: &Path, rows: &[(String, String, u64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["province_id", "region_id", "population"])?;
    for (province, region, pop) in rows {
        w.write_record([province.as_str(), region.as_str(), &pop.to_string()])?;
    }
    atomic_write(path, &into_bytes(w)?)
}

pub fn read_candidates(path: &Path) -> Result<Vec<CandidateBinConfig>> {
    let mut reader = open_reader(path)?;
    expect_headers(path, &mut reader, &["lower_edge", "interval"])?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| bad_row(path, line, e))?;
        out.push(
            CandidateBinConfig::new(
                parse_f64(path, line, "lower_edge", &record[0])?,
                parse_f64(path, line, "interval", &record[1])?,
            )
            .map_err(|e| bad_row(path, line, e))?,
        );
    }
    if out.is_empty() {
        return Err(bad_row(path, 1, "no candidates"));
    }
    Ok(out)
}

pub fn write_candidates(path: &Path, candidates: &[CandidateBinConfig]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lower_edge", "interval"])?;
    for c in candidates {
        w.write_record([c.lower_edge.to_string(), c.interval.to_string()])?;
    }
    atomic_write(path, &into_bytes(w)?)
}

// ---------------------------------------------------------------------------
// Fit document
// ---------------------------------------------------------------------------

/// Serialized regression result: named coefficients, row-major covariance,
/// and fit statistics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitDocument {
    pub spec: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
    pub vcov: Vec<f64>,
    pub n_obs: usize,
    pub r2: f64,
    pub within_r2: f64,
    pub cluster_count: usize,
}

pub fn write_fit(path: &Path, doc: &FitDocument) -> Result<()> {
    let mut json = serde_json::to_string_pretty(doc)?;
    json.push('\n');
    atomic_write(path, json.as_bytes())
}

pub fn read_fit(path: &Path) -> Result<FitDocument> {
    let file = fs::File::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(file)?)
}

// ---------------------------------------------------------------------------
// Run store
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RunRecord {
    province: String,
    year: i32,
    model: String,
    rcp: String,
    growth: String,
    draw: u32,
    g_plus: f64,
    gpp_ratio: f64,
}

/// Streams projection rows into one CSV per (model, rcp, growth) cell under
/// a runs directory. Rows must arrive grouped by partition, which the
/// ensemble order guarantees.
pub struct RunStore {
    dir: PathBuf,
    current: Option<(String, csv::Writer<tempfile::NamedTempFile>)>,
    pub files: Vec<PathBuf>,
}

impl RunStore {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), current: None, files: Vec::new() })
    }

    fn partition_key(run: &ProjectionRun) -> String {
        format!("{}_{}_{}", run.model_id, run.rcp.as_str(), run.growth.as_str())
    }

    pub fn write(&mut self, run: &ProjectionRun) -> Result<()> {
        let key = Self::partition_key(run);
        let rotate = match &self.current {
            Some((k, _)) => *k != key,
            None => true,
        };
        if rotate {
            self.flush_current()?;
            let tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
            let mut w = csv::Writer::from_writer(tmp);
            w.write_record([
                "province", "year", "model", "rcp", "growth", "draw", "g_plus", "gpp_ratio",
            ])?;
            self.current = Some((key, w));
        }
        let (_, w) = self.current.as_mut().expect("writer just installed");
        w.write_record([
            run.province_id.as_str(),
            &run.year.to_string(),
            run.model_id.as_str(),
            run.rcp.as_str(),
            run.growth.as_str(),
            &run.draw.to_string(),
            &run.g_plus.to_string(),
            &run.gpp_ratio.to_string(),
        ])?;
        Ok(())
    }

    fn flush_current(&mut self) -> Result<()> {
        if let Some((key, w)) = self.current.take() {
            let tmp = w.into_inner().map_err(|e| CliError::config(e.to_string()))?;
            let path = self.dir.join(format!("{key}.csv"));
            tmp.persist(&path).map_err(|e| CliError::config(e.to_string()))?;
            self.files.push(path);
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<Vec<PathBuf>> {
        self.flush_current()?;
        Ok(std::mem::take(&mut self.files))
    }
}

/// Reads every `*.csv` under a runs directory, sorted by file name.
pub fn read_runs_dir(dir: &Path) -> Result<Vec<ProjectionRun>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::validation(format!("{}: no run files", dir.display())));
    }
    let mut out = Vec::new();
    for path in paths {
        let mut reader = open_reader(&path)?;
        for (i, record) in reader.deserialize::<RunRecord>().enumerate() {
            let line = i as u64 + 2;
            let r = record.map_err(|e| bad_row(&path, line, e))?;
            out.push(ProjectionRun {
                province_id: r.province,
                year: r.year,
                model_id: r.model,
                rcp: Rcp::parse(&r.rcp).map_err(|e| bad_row(&path, line, e))?,
                growth: GrowthKind::parse(&r.growth).map_err(|e| bad_row(&path, line, e))?,
                draw: r.draw,
                g_plus: r.g_plus,
                gpp_ratio: r.gpp_ratio,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Summary and plot outputs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scope: String,
    pub scope_id: String,
    pub scenario: String,
    pub year: i32,
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    pub probability_positive: f64,
    pub probability_nonnegative: f64,
    pub share_population_negatively_affected: String,
    pub n_cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotRow {
    pub year: i32,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
    pub scenario: String,
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        return Err(CliError::validation("no summary rows"));
    }
    atomic_write(path, &into_bytes(w)?)
}

pub fn write_plot(path: &Path, rows: &[PlotRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    atomic_write(path, &into_bytes(w)?)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = open_reader(path)?;
    let mut out = Vec::new();
    for (i, record) in reader.deserialize::<SummaryRow>().enumerate() {
        out.push(record.map_err(|e| bad_row(path, i as u64 + 2, e))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn reg(province: &str, year: i32) -> AnnualRegressorSet {
        AnnualRegressorSet {
            province_id: province.to_string(),
            year,
            poly_terms: vec![9490.5, 246740.25],
            bin_days: vec![10.0, 20.0, 30.0, 200.0, 60.0, 40.0, 5.0],
            hdd: 12.5,
            cdd: 33.25,
            precip_linear: 800.0,
            precip_sq: 9000.125,
            precip_bin_days: vec![100.0, 90.0, 80.0, 60.0, 35.0],
        }
    }

    #[test]
    fn panel_roundtrip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        let rows: Vec<PanelOutRow> = (0..4)
            .map(|i| {
                let mut r = reg(&format!("P{i}"), 2000 + i);
                r.poly_terms[0] += 0.1 * i as f64 + 1.0 / 3.0;
                PanelOutRow {
                    reg: r,
                    g: Some(1.25 + i as f64 / 7.0),
                    region_id: Some("north".into()),
                    low_income: Some(i % 2 == 0),
                    income_level: None,
                    candidate_bins: vec![],
                }
            })
            .collect();
        write_panel(&path, &rows).unwrap();
        let file = read_panel(&path).unwrap();
        assert_eq!(file.dataset.rows().len(), 4);
        assert!(file.schema.has_outcomes);
        assert_eq!(file.schema.poly_order, 2);
        assert_eq!(file.schema.n_temp_bins, 7);
        assert_eq!(file.schema.n_precip_bins, 5);
        for (i, row) in file.dataset.rows().iter().enumerate() {
            // Shortest round-trip float formatting restores the exact bits.
            let mut expected = 9490.5;
            expected += 0.1 * i as f64 + 1.0 / 3.0;
            assert_eq!(row.g, 1.25 + i as f64 / 7.0);
            assert_eq!(row.regressors.poly_terms[0], expected);
            assert_eq!(row.low_income, i % 2 == 0);
        }
    }

    #[test]
    fn candidate_columns_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        let candidates = vec![CandidateBinConfig::new(23.0, 5.0).unwrap(), CandidateBinConfig::new(26.0, 1.0).unwrap()];
        let n0 = candidates[0].edges().len() + 1;
        let n1 = candidates[1].edges().len() + 1;
        let rows: Vec<PanelOutRow> = (0..3)
            .map(|i| PanelOutRow {
                reg: reg(&format!("P{i}"), 2001),
                g: Some(i as f64),
                region_id: Some("r".into()),
                low_income: Some(false),
                income_level: None,
                candidate_bins: vec![
                    (0..n0).map(|b| (b * 10 + i) as f64).collect(),
                    (0..n1).map(|b| (b + i) as f64).collect(),
                ],
            })
            .collect();
        write_panel_with_candidates(&path, &rows, &candidates).unwrap();
        let file = read_panel(&path).unwrap();
        assert_eq!(file.candidate_bins.len(), 2);
        for (config, store) in &file.candidate_bins {
            assert!(candidates.contains(config));
            assert_eq!(store.len(), 3);
        }
        let (c0, store0) =
            file.candidate_bins.iter().find(|(c, _)| c.lower_edge == 23.0).unwrap();
        assert_eq!(c0.interval, 5.0);
        assert_eq!(store0[&("P1".to_string(), 2001)], (0..n0).map(|b| (b * 10 + 1) as f64).collect::<Vec<f64>>());
    }

    #[test]
    fn grid_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cells = BTreeMap::new();
        let mut hours = Vec::new();
        let mut days = Vec::new();
        for d in 1..=366 {
            let date = NaiveDate::from_yo_opt(2004, d).unwrap();
            for h in 0..24 {
                hours.push((date.and_hms_opt(h, 0, 0).unwrap(), 20.0 + (h as f64) / 24.0));
            }
            days.push((date, 3.5));
        }
        cells.insert("c1".to_string(), RawCell { lat: 15.5, lon: 101.25, hours, days });
        write_grid_dir(dir.path(), &cells).unwrap();
        let grid = read_grid_dir(dir.path()).unwrap();
        assert_eq!(grid.len(), 1);
        let series = grid.get("c1").unwrap();
        let on = series.hours_on(NaiveDate::from_ymd_opt(2004, 2, 29).unwrap()).unwrap();
        assert_eq!(on[5], 20.0 + 5.0 / 24.0);
        assert_eq!(series.precip_on(NaiveDate::from_ymd_opt(2004, 12, 31).unwrap()).unwrap(), 3.5);
    }

    #[test]
    fn weights_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        write_weights_dir(
            dir.path(),
            &[("j1".into(), "c1".into(), 0.25), ("j1".into(), "c2".into(), 0.75)],
            &[("A".into(), "j1".into(), 2000, 2030, 1.0)],
        )
        .unwrap();
        let weights = read_weights_dir(dir.path()).unwrap();
        assert_eq!(weights.polygon_weights("A", 2010).unwrap().len(), 1);

        // A polygon whose cell weights sum to 0.9 is rejected with its id.
        write_weights_dir(
            dir.path(),
            &[("j9".into(), "c1".into(), 0.9)],
            &[("A".into(), "j9".into(), 2000, 2030, 1.0)],
        )
        .unwrap();
        let err = read_weights_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("j9"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn growth_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("growth.csv");
        let mut growth = GrowthFile::default();
        growth.baseline_override.insert("A".into(), 3.25);
        growth.level_2022.insert("A".into(), 112.5);
        growth.linkage.insert("A".into(), Linkage { intercept: 1.5, slope: 0.625 });
        growth.ssp_points.insert("ssp3".into(), vec![(2020, 100.0), (2025, 120.0), (2030, 150.0)]);
        write_growth(&path, &growth).unwrap();
        let back = read_growth(&path).unwrap();
        assert_eq!(back.baseline_override, growth.baseline_override);
        assert_eq!(back.level_2022, growth.level_2022);
        assert_eq!(back.linkage["A"].slope, 0.625);
        let ssp = back.ssp_path(GrowthKind::Ssp3).unwrap();
        assert_eq!(ssp.first_year, 2020);
        assert_eq!(ssp.gdpcap, vec![100.0, 120.0, 150.0]);
        assert!(back.ssp_path(GrowthKind::Ssp5).is_err());
    }

    #[test]
    fn run_store_partitions_by_cell() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = RunStore::create(dir.path()).unwrap();
        let mut run = ProjectionRun {
            province_id: "A".into(),
            year: 2023,
            model_id: "m1".into(),
            rcp: Rcp::Rcp45,
            growth: GrowthKind::Baseline,
            draw: 0,
            g_plus: 2.5,
            gpp_ratio: 0.99,
        };
        store.write(&run).unwrap();
        run.year = 2024;
        store.write(&run).unwrap();
        run.model_id = "m2".into();
        store.write(&run).unwrap();
        let files = store.finish().unwrap();
        assert_eq!(files.len(), 2);
        assert!(files[0].ends_with("m1_rcp45_baseline.csv"));
        assert!(files[1].ends_with("m2_rcp45_baseline.csv"));
        let runs = read_runs_dir(dir.path()).unwrap();
        assert_eq!(runs.len(), 3);
        assert_eq!(runs[0].g_plus, 2.5);
        assert_eq!(runs[2].model_id, "m2");
    }

    #[test]
    fn fit_document_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.json");
        let doc = FitDocument {
            spec: [("form".to_string(), "polynomial".to_string())].into_iter().collect(),
            columns: vec!["temp1".into(), "temp2".into()],
            beta: vec![0.0494, -0.0009],
            vcov: vec![1e-4, 0.0, 0.0, 1e-6],
            n_obs: 3157,
            r2: 0.42,
            within_r2: 0.08,
            cluster_count: 77,
        };
        write_fit(&path, &doc).unwrap();
        assert_eq!(read_fit(&path).unwrap(), doc);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        atomic_write(&path, b"first").unwrap();
        atomic_write(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        let digest = sha256_hex(&path).unwrap();
        assert_eq!(digest.len(), 64);
    }
}
