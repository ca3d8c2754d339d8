//! Population-weighted aggregation of gridded weather into annual regressors.
//!
//! The chain is cell → polygon → province: hourly grid temperatures are
//! combined with cell-coverage weights `w_cj` (how much of polygon `j` each
//! cell covers) and population weights `w_jp` (polygon `j`'s share of
//! province `p`'s population), producing province-day exposures that are
//! summed across a year. Nonlinear transforms (powers, bin indicators,
//! threshold clips) are applied to *hourly cell values* before any
//! averaging, so a province-day is a weighted mean of 24-hour cell profiles
//! rather than a transform of a pre-averaged temperature.
//!
//! Precipitation is daily input; its transforms (squares, bin indicators)
//! apply to cell daily totals before weighting and carry no 1/24 factor.
//!
//! All sums run through compensated accumulators: results are deterministic
//! and independent of iteration order to well below the 1e-9 contract.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};

use crate::numeric::Accumulator;
use crate::{Error, Result};

/// Identifier aliases; ids are opaque strings throughout the pipeline.
pub type CellId = String;
pub type PolygonId = String;
pub type ProvinceId = String;

/// Number of calendar days in `year` (365 or 366).
pub fn days_in_year(year: i32) -> u32 {
    if NaiveDate::from_ymd_opt(year, 12, 31).is_some() {
        NaiveDate::from_ymd_opt(year, 12, 31).unwrap().ordinal()
    } else {
        365
    }
}

/// Hourly temperature and daily precipitation series for one grid cell.
///
/// Invariants enforced at construction: temperatures finite within
/// [-90, 60] °C, precipitation finite and non-negative, timestamps strictly
/// increasing, and exactly 24 hourly records per covered day.
#[derive(Debug, Clone)]
pub struct GridHourlySeries {
    pub cell_id: CellId,
    pub lat: f64,
    pub lon: f64,
    temps: BTreeMap<NaiveDate, [f64; 24]>,
    precip: BTreeMap<NaiveDate, f64>,
}

impl GridHourlySeries {
    pub fn new(
        cell_id: CellId,
        lat: f64,
        lon: f64,
        hours: Vec<(NaiveDateTime, f64)>,
        days: Vec<(NaiveDate, f64)>,
    ) -> Result<Self> {
        let mut temps: BTreeMap<NaiveDate, [f64; 24]> = BTreeMap::new();
        let mut counts: BTreeMap<NaiveDate, u32> = BTreeMap::new();
        let mut prev: Option<NaiveDateTime> = None;
        for (ts, t) in hours {
            if let Some(p) = prev {
                if ts <= p {
                    return Err(Error::InvalidData {
                        reason: format!("cell {cell_id}: timestamps not strictly increasing at {ts}"),
                    });
                }
            }
            prev = Some(ts);
            if !t.is_finite() || !(-90.0..=60.0).contains(&t) {
                return Err(Error::InvalidData {
                    reason: format!("cell {cell_id}: temperature {t} out of range at {ts}"),
                });
            }
            let date = ts.date();
            let hour = ts.time().hour() as usize;
            temps.entry(date).or_insert([f64::NAN; 24])[hour] = t;
            *counts.entry(date).or_insert(0) += 1;
        }
        for (date, n) in &counts {
            if *n != 24 || temps[date].iter().any(|t| t.is_nan()) {
                return Err(Error::MissingData {
                    cell: cell_id.clone(),
                    date: date.to_string(),
                });
            }
        }
        let mut precip: BTreeMap<NaiveDate, f64> = BTreeMap::new();
        let mut prev_day: Option<NaiveDate> = None;
        for (date, r) in days {
            if let Some(p) = prev_day {
                if date <= p {
                    return Err(Error::InvalidData {
                        reason: format!("cell {cell_id}: precipitation dates not strictly increasing at {date}"),
                    });
                }
            }
            prev_day = Some(date);
            if !r.is_finite() || r < 0.0 {
                return Err(Error::InvalidData {
                    reason: format!("cell {cell_id}: precipitation {r} invalid on {date}"),
                });
            }
            precip.insert(date, r);
        }
        Ok(Self { cell_id, lat, lon, temps, precip })
    }

    /// The 24 hourly temperatures of `date`, or MissingData.
    pub fn hours_on(&self, date: NaiveDate) -> Result<&[f64; 24]> {
        self.temps.get(&date).ok_or_else(|| Error::MissingData {
            cell: self.cell_id.clone(),
            date: date.to_string(),
        })
    }

    /// Daily precipitation total for `date`, or MissingData.
    pub fn precip_on(&self, date: NaiveDate) -> Result<f64> {
        self.precip.get(&date).copied().ok_or_else(|| Error::MissingData {
            cell: self.cell_id.clone(),
            date: date.to_string(),
        })
    }
}

/// Grid cells keyed by id, the lookup unit for aggregation.
#[derive(Debug, Clone, Default)]
pub struct GridSet {
    cells: BTreeMap<CellId, GridHourlySeries>,
}

impl GridSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, series: GridHourlySeries) {
        self.cells.insert(series.cell_id.clone(), series);
    }

    pub fn get(&self, cell: &str) -> Result<&GridHourlySeries> {
        self.cells.get(cell).ok_or_else(|| Error::InvalidData {
            reason: format!("unknown grid cell {cell}"),
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// One polygon-weight entry of a province, valid for `year_from..=year_to`.
#[derive(Debug, Clone)]
pub struct PopulationWeight {
    pub polygon_id: PolygonId,
    pub w_jp: f64,
    pub year_from: i32,
    pub year_to: i32,
}

/// Cell-coverage and population weights.
///
/// Construction checks that every weight lies in [0, 1], that cell weights
/// sum to one per polygon, and that population weights sum to one per
/// province for every vintage year.
#[derive(Debug, Clone, Default)]
pub struct WeightMap {
    cell_weights: BTreeMap<PolygonId, Vec<(CellId, f64)>>,
    population_weights: BTreeMap<ProvinceId, Vec<PopulationWeight>>,
}

const WEIGHT_SUM_TOL: f64 = 1e-9;

impl WeightMap {
    pub fn new(
        cell_weights: BTreeMap<PolygonId, Vec<(CellId, f64)>>,
        population_weights: BTreeMap<ProvinceId, Vec<PopulationWeight>>,
    ) -> Result<Self> {
        for (polygon, cells) in &cell_weights {
            let mut sum = Accumulator::new();
            for (cell, w) in cells {
                if !w.is_finite() || !(0.0..=1.0).contains(w) {
                    return Err(Error::InvalidWeights {
                        scope: format!("polygon {polygon} cell {cell}"),
                        sum: *w,
                    });
                }
                sum.add(*w);
            }
            if libm::fabs(sum.total() - 1.0) > WEIGHT_SUM_TOL {
                return Err(Error::InvalidWeights {
                    scope: format!("polygon {polygon}"),
                    sum: sum.total(),
                });
            }
        }
        let map = Self { cell_weights, population_weights };
        for (province, entries) in &map.population_weights {
            for e in entries {
                if !e.w_jp.is_finite() || !(0.0..=1.0).contains(&e.w_jp) {
                    return Err(Error::InvalidWeights {
                        scope: format!("province {province} polygon {}", e.polygon_id),
                        sum: e.w_jp,
                    });
                }
                if e.year_from > e.year_to {
                    return Err(Error::InvalidData {
                        reason: format!(
                            "province {province} polygon {}: empty year range {}..{}",
                            e.polygon_id, e.year_from, e.year_to
                        ),
                    });
                }
            }
            // Every vintage year (each distinct year_from) must select a
            // fully normalized weight set.
            for vintage in entries.iter().map(|e| e.year_from) {
                let mut sum = Accumulator::new();
                for e in entries.iter().filter(|e| e.year_from <= vintage && vintage <= e.year_to) {
                    sum.add(e.w_jp);
                }
                if libm::fabs(sum.total() - 1.0) > WEIGHT_SUM_TOL {
                    return Err(Error::InvalidWeights {
                        scope: format!("province {province} year {vintage}"),
                        sum: sum.total(),
                    });
                }
            }
        }
        Ok(map)
    }

    pub fn provinces(&self) -> impl Iterator<Item = &ProvinceId> {
        self.population_weights.keys()
    }

    /// Polygon weights of `province` effective in `year`.
    ///
    /// Years before the earliest vintage reuse the earliest weights, the
    /// same convention used when population counts do not reach back to the
    /// start of the weather record.
    pub fn polygon_weights(&self, province: &str, year: i32) -> Result<Vec<(&PolygonId, f64)>> {
        let entries = self.population_weights.get(province).ok_or_else(|| Error::InvalidData {
            reason: format!("unknown province {province}"),
        })?;
        let effective_year = entries
            .iter()
            .map(|e| e.year_from)
            .min()
            .map(|earliest| year.max(earliest))
            .ok_or_else(|| Error::InvalidWeights {
                scope: format!("province {province}: no population weights"),
                sum: 0.0,
            })?;
        let selected: Vec<(&PolygonId, f64)> = entries
            .iter()
            .filter(|e| e.year_from <= effective_year && effective_year <= e.year_to)
            .map(|e| (&e.polygon_id, e.w_jp))
            .collect();
        if selected.is_empty() {
            return Err(Error::InvalidWeights {
                scope: format!("province {province} year {year}: no effective weights"),
                sum: 0.0,
            });
        }
        Ok(selected)
    }

    /// Cell weights of `polygon`.
    pub fn cell_weights(&self, polygon: &str) -> Result<&[(CellId, f64)]> {
        self.cell_weights
            .get(polygon)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidWeights {
                scope: format!("polygon {polygon}: no cell weights"),
                sum: 0.0,
            })
    }
}

/// Annual regressors for one province-year, the row unit of the panel.
///
/// `poly_terms[m-1]` is Σ_d (1/24 Σ_h T^m) in °C^m·days; `bin_days` and
/// `precip_bin_days` are fractional day counts; `hdd`/`cdd` are degree-days;
/// `precip_linear` is mm/year and `precip_sq` its squared-daily analog.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnualRegressorSet {
    pub province_id: ProvinceId,
    pub year: i32,
    pub poly_terms: Vec<f64>,
    pub bin_days: Vec<f64>,
    pub hdd: f64,
    pub cdd: f64,
    pub precip_linear: f64,
    pub precip_sq: f64,
    pub precip_bin_days: Vec<f64>,
}

impl AnnualRegressorSet {
    /// Element-wise mean over a non-empty set with identical shapes; used
    /// for climatology baselines.
    pub fn mean_of<'a, I>(province_id: ProvinceId, year: i32, sets: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a AnnualRegressorSet>,
    {
        let mut iter = sets.into_iter();
        let first = iter.next().ok_or_else(|| Error::MissingBaseline {
            reason: format!("no regressor sets to average for {province_id}"),
        })?;
        let mut out = first.clone();
        out.province_id = province_id;
        out.year = year;
        let mut n = 1.0;
        for s in iter {
            if s.poly_terms.len() != out.poly_terms.len()
                || s.bin_days.len() != out.bin_days.len()
                || s.precip_bin_days.len() != out.precip_bin_days.len()
            {
                return Err(Error::InvalidData {
                    reason: "regressor sets with mismatched shapes".to_string(),
                });
            }
            for (a, b) in out.poly_terms.iter_mut().zip(&s.poly_terms) {
                *a += b;
            }
            for (a, b) in out.bin_days.iter_mut().zip(&s.bin_days) {
                *a += b;
            }
            for (a, b) in out.precip_bin_days.iter_mut().zip(&s.precip_bin_days) {
                *a += b;
            }
            out.hdd += s.hdd;
            out.cdd += s.cdd;
            out.precip_linear += s.precip_linear;
            out.precip_sq += s.precip_sq;
            n += 1.0;
        }
        for v in out
            .poly_terms
            .iter_mut()
            .chain(out.bin_days.iter_mut())
            .chain(out.precip_bin_days.iter_mut())
        {
            *v /= n;
        }
        out.hdd /= n;
        out.cdd /= n;
        out.precip_linear /= n;
        out.precip_sq /= n;
        Ok(out)
    }
}

/// Configuration of the regressor schema produced by [`annual_regressor_set`].
#[derive(Debug, Clone)]
pub struct RegressorConfig {
    /// Highest polynomial order, 2..=7.
    pub max_order: usize,
    /// Interior temperature bin edges, strictly ascending; bins extend open
    /// below the first and above the last edge.
    pub bin_edges: Vec<f64>,
    pub hdd_threshold: f64,
    pub cdd_threshold: f64,
    /// Interior precipitation edges in mm; the zero bin (days with no
    /// precipitation) is implicit below, and the top bin is open above.
    pub precip_edges: Vec<f64>,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            max_order: 2,
            bin_edges: alloc::vec![13.0, 18.0, 23.0, 28.0, 33.0, 38.0],
            hdd_threshold: 23.0,
            cdd_threshold: 28.0,
            precip_edges: alloc::vec![10.0, 20.0, 30.0, 40.0],
        }
    }
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.is_empty() {
        return Err(Error::InvalidBins { reason: "empty edge list".to_string() });
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidBins { reason: "edges not strictly ascending".to_string() });
    }
    Ok(())
}

/// Bin index for `value` under interior `edges`: open below the first edge,
/// half-open [lower, upper) between edges, open above the last.
#[inline]
pub fn bin_index(value: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|e| value >= **e).count()
}

/// Precipitation bin index: bin 0 is exactly-zero days, bin 1 is (0, e0),
/// then half-open interior bins, with the top bin open above the last edge.
#[inline]
pub fn precip_bin_index(total: f64, edges: &[f64]) -> usize {
    if total == 0.0 {
        0
    } else {
        1 + edges.iter().take_while(|e| total >= **e).count()
    }
}

#[inline]
fn powi(base: f64, exp: usize) -> f64 {
    let mut out = 1.0;
    for _ in 0..exp {
        out *= base;
    }
    out
}

fn year_dates(year: i32) -> impl Iterator<Item = NaiveDate> {
    (1..=days_in_year(year)).map(move |ord| NaiveDate::from_yo_opt(year, ord).unwrap())
}

/// Iterates the weighted (polygon, cell) pairs of a province-year, handing
/// the combined weight w_jp·w_cj and cell series to `f`.
fn for_each_weighted_cell<F>(
    province: &str,
    year: i32,
    grids: &GridSet,
    weights: &WeightMap,
    mut f: F,
) -> Result<()>
where
    F: FnMut(f64, &GridHourlySeries) -> Result<()>,
{
    for (polygon, w_jp) in weights.polygon_weights(province, year)? {
        for (cell, w_cj) in weights.cell_weights(polygon)? {
            f(w_jp * w_cj, grids.get(cell)?)?;
        }
    }
    Ok(())
}

/// Population-weighted mean temperature of `province` on `date`.
pub fn daily_mean_temperature(
    province: &str,
    date: NaiveDate,
    grids: &GridSet,
    weights: &WeightMap,
) -> Result<f64> {
    let mut acc = Accumulator::new();
    for_each_weighted_cell(province, date.year(), grids, weights, |w, series| {
        let hours = series.hours_on(date)?;
        let mut day = Accumulator::new();
        for &t in hours {
            day.add(t);
        }
        acc.add(w * (day.total() / 24.0));
        Ok(())
    })?;
    Ok(acc.total())
}

/// Annual polynomial terms: entry m-1 holds Σ_d Σ_j Σ_c w_jp w_cj (1/24) Σ_h T^m.
///
/// Powers apply to hourly values before the daily average, preserving
/// within-day variation (a day alternating 20/30 °C has a larger square
/// term than a constant 25 °C day).
pub fn annual_polynomial_regressors(
    province: &str,
    year: i32,
    max_order: usize,
    grids: &GridSet,
    weights: &WeightMap,
) -> Result<Vec<f64>> {
    if !(2..=7).contains(&max_order) {
        return Err(Error::InvalidData {
            reason: format!("polynomial order {max_order} outside 2..=7"),
        });
    }
    let mut acc: Vec<Accumulator> = alloc::vec![Accumulator::new(); max_order];
    for_each_weighted_cell(province, year, grids, weights, |w, series| {
        for date in year_dates(year) {
            let hours = series.hours_on(date)?;
            for (m, slot) in acc.iter_mut().enumerate() {
                let mut day = Accumulator::new();
                for &t in hours {
                    day.add(powi(t, m + 1));
                }
                slot.add(w * (day.total() / 24.0));
            }
        }
        Ok(())
    })?;
    Ok(acc.iter().map(Accumulator::total).collect())
}

/// Fractional days per temperature bin, hour-counted.
pub fn annual_bin_days(
    province: &str,
    year: i32,
    bin_edges: &[f64],
    grids: &GridSet,
    weights: &WeightMap,
) -> Result<Vec<f64>> {
    validate_edges(bin_edges)?;
    let n_bins = bin_edges.len() + 1;
    let mut acc: Vec<Accumulator> = alloc::vec![Accumulator::new(); n_bins];
    for_each_weighted_cell(province, year, grids, weights, |w, series| {
        for date in year_dates(year) {
            let hours = series.hours_on(date)?;
            let mut counts = alloc::vec![0u32; n_bins];
            for &t in hours {
                counts[bin_index(t, bin_edges)] += 1;
            }
            for (slot, c) in acc.iter_mut().zip(&counts) {
                if *c > 0 {
                    slot.add(w * (*c as f64 / 24.0));
                }
            }
        }
        Ok(())
    })?;
    Ok(acc.iter().map(Accumulator::total).collect())
}

/// Degree days from hourly shortfall/excess around the thresholds.
pub fn annual_degree_days(
    province: &str,
    year: i32,
    hdd_threshold: f64,
    cdd_threshold: f64,
    grids: &GridSet,
    weights: &WeightMap,
) -> Result<(f64, f64)> {
    if hdd_threshold > cdd_threshold {
        return Err(Error::InvalidData {
            reason: format!("hdd threshold {hdd_threshold} above cdd threshold {cdd_threshold}"),
        });
    }
    let mut hdd = Accumulator::new();
    let mut cdd = Accumulator::new();
    for_each_weighted_cell(province, year, grids, weights, |w, series| {
        for date in year_dates(year) {
            let hours = series.hours_on(date)?;
            let mut h_day = Accumulator::new();
            let mut c_day = Accumulator::new();
            for &t in hours {
                if t < hdd_threshold {
                    h_day.add(hdd_threshold - t);
                }
                if t > cdd_threshold {
                    c_day.add(t - cdd_threshold);
                }
            }
            hdd.add(w * (h_day.total() / 24.0));
            cdd.add(w * (c_day.total() / 24.0));
        }
        Ok(())
    })?;
    Ok((hdd.total(), cdd.total()))
}

/// Linear, squared, and binned precipitation regressors.
///
/// Daily cell totals are transformed before weighting; the square term is
/// Σ_d weighted (R_cd)², not the square of the weighted mean.
pub fn annual_precip_regressors(
    province: &str,
    year: i32,
    precip_edges: &[f64],
    grids: &GridSet,
    weights: &WeightMap,
) -> Result<(f64, f64, Vec<f64>)> {
    validate_edges(precip_edges)?;
    let n_bins = precip_edges.len() + 2;
    let mut linear = Accumulator::new();
    let mut square = Accumulator::new();
    let mut bins: Vec<Accumulator> = alloc::vec![Accumulator::new(); n_bins];
    for_each_weighted_cell(province, year, grids, weights, |w, series| {
        for date in year_dates(year) {
            let r = series.precip_on(date)?;
            if r < 0.0 {
                return Err(Error::InvalidData {
                    reason: format!("negative precipitation {r} on {date}"),
                });
            }
            linear.add(w * r);
            square.add(w * r * r);
            bins[precip_bin_index(r, precip_edges)].add(w);
        }
        Ok(())
    })?;
    Ok((
        linear.total(),
        square.total(),
        bins.iter().map(Accumulator::total).collect(),
    ))
}

/// Builds the full regressor row for one province-year under `config`.
pub fn annual_regressor_set(
    province: &str,
    year: i32,
    config: &RegressorConfig,
    grids: &GridSet,
    weights: &WeightMap,
) -> Result<AnnualRegressorSet> {
    let poly_terms = annual_polynomial_regressors(province, year, config.max_order, grids, weights)?;
    let bin_days = annual_bin_days(province, year, &config.bin_edges, grids, weights)?;
    let (hdd, cdd) =
        annual_degree_days(province, year, config.hdd_threshold, config.cdd_threshold, grids, weights)?;
    let (precip_linear, precip_sq, precip_bin_days) =
        annual_precip_regressors(province, year, &config.precip_edges, grids, weights)?;
    Ok(AnnualRegressorSet {
        province_id: province.to_string(),
        year,
        poly_terms,
        bin_days,
        hdd,
        cdd,
        precip_linear,
        precip_sq,
        precip_bin_days,
    })
}
