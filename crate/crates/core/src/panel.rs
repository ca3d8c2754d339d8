//! Two-way fixed-effects estimation of growth-weather response functions.
//!
//! The estimator follows the standard within-transformation route: fixed
//! effects are absorbed by alternating group demeaning (Guimarães &
//! Portugal, 2010) rather than explicit dummies, the demeaned system is
//! solved by SVD with a hard rank check, and covariance is the
//! cluster-robust sandwich of Liang & Zeger (1986) with the usual
//! G/(G-1)·(N-1)/(N-K) small-sample factor (Cameron & Miller, 2015).
//! Absorption and dummy-variable OLS agree to numerical precision; the test
//! suite checks this equivalence against an explicit dummy oracle.
//!
//! Functional forms: polynomial in temperature, temperature bins relative to
//! an omitted bin, heating/cooling degree days, and an interacted-average
//! form in which annual mean temperature enters interacted with province
//! climatology and income. Each form carries a matched precipitation
//! control. Distributed lags up to five years and a low-income interaction
//! that splits every weather column into group-specific copies are
//! supported on top of any form.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::numeric;
use crate::weather::{days_in_year, AnnualRegressorSet};
use crate::{Error, Result};

/// Temperature support (°C) on which responses may be evaluated; matches the
/// range observed in the historical exposure data.
pub const RESPONSE_SUPPORT: (f64, f64) = (11.0, 41.0);

const ABSORB_TOL: f64 = 1e-10;
const ABSORB_MAX_SWEEPS: usize = 10_000;
const RANK_RTOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Panel data
// ---------------------------------------------------------------------------

/// One province-year observation.
#[derive(Debug, Clone)]
pub struct PanelRow {
    pub province_id: String,
    pub year: i32,
    /// Annual growth rate of real output per capita, percentage points.
    pub g: f64,
    pub regressors: AnnualRegressorSet,
    pub region_id: String,
    pub low_income: bool,
    /// Average real output per capita; required only by the
    /// income-interacted alternative formulation.
    pub income_level: Option<f64>,
    /// Optional sectoral growth outcomes keyed by sector name.
    pub sector_growth: BTreeMap<String, f64>,
}

/// Validated panel: rows sorted by (province, year), keys unique, growth
/// finite, and the low-income flag constant within each province.
#[derive(Debug, Clone)]
pub struct PanelDataset {
    rows: Vec<PanelRow>,
}

impl PanelDataset {
    pub fn new(mut rows: Vec<PanelRow>) -> Result<Self> {
        rows.sort_by(|a, b| (a.province_id.as_str(), a.year).cmp(&(b.province_id.as_str(), b.year)));
        let mut flags: BTreeMap<&str, bool> = BTreeMap::new();
        for pair in rows.windows(2) {
            if pair[0].province_id == pair[1].province_id && pair[0].year == pair[1].year {
                return Err(Error::InvalidData {
                    reason: format!(
                        "duplicate panel row {} {}",
                        pair[0].province_id, pair[0].year
                    ),
                });
            }
        }
        for row in &rows {
            if !row.g.is_finite() {
                return Err(Error::InvalidData {
                    reason: format!("non-finite growth for {} {}", row.province_id, row.year),
                });
            }
            match flags.get(row.province_id.as_str()) {
                Some(flag) if *flag != row.low_income => {
                    return Err(Error::InvalidData {
                        reason: format!("low_income flag varies within {}", row.province_id),
                    })
                }
                None => {
                    flags.insert(&row.province_id, row.low_income);
                }
                _ => {}
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[PanelRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sorted distinct province ids.
    pub fn provinces(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.rows.iter().map(|r| r.province_id.as_str()).collect();
        out.dedup();
        out
    }

    /// Rows with `year_min <= year <= year_max`.
    pub fn filter_years(&self, year_min: i32, year_max: i32) -> PanelDataset {
        PanelDataset {
            rows: self
                .rows
                .iter()
                .filter(|r| (year_min..=year_max).contains(&r.year))
                .cloned()
                .collect(),
        }
    }

    /// Rows belonging to provinces satisfying `keep`.
    pub fn filter_provinces<F: Fn(&str) -> bool>(&self, keep: F) -> PanelDataset {
        PanelDataset {
            rows: self.rows.iter().filter(|r| keep(&r.province_id)).cloned().collect(),
        }
    }

    /// Same panel with the outcome replaced by a sector's growth series.
    pub fn with_sector_outcome(&self, sector: &str) -> Result<PanelDataset> {
        let mut rows = self.rows.clone();
        for row in &mut rows {
            row.g = *row.sector_growth.get(sector).ok_or_else(|| Error::InvalidData {
                reason: format!("sector {sector} missing for {} {}", row.province_id, row.year),
            })?;
        }
        Ok(PanelDataset { rows })
    }

    /// Same panel with every row's temperature bins replaced, used when
    /// evaluating candidate bin schemes.
    pub fn with_bin_days(
        &self,
        bins: &BTreeMap<(String, i32), Vec<f64>>,
    ) -> Result<PanelDataset> {
        let mut rows = self.rows.clone();
        for row in &mut rows {
            let key = (row.province_id.clone(), row.year);
            row.regressors.bin_days = bins
                .get(&key)
                .ok_or_else(|| Error::InvalidData {
                    reason: format!("no candidate bins for {} {}", key.0, key.1),
                })?
                .clone();
        }
        PanelDataset::new(rows)
    }

    /// Pairs-block resample: the named provinces, in order, become distinct
    /// clusters (`name~k` for the k-th occurrence), so a province drawn
    /// twice contributes two independent blocks.
    pub fn resample_provinces(&self, sampled: &[&str]) -> Result<PanelDataset> {
        let mut by_province: BTreeMap<&str, Vec<&PanelRow>> = BTreeMap::new();
        for row in &self.rows {
            by_province.entry(&row.province_id).or_default().push(row);
        }
        let mut rows = Vec::with_capacity(self.rows.len());
        for (k, name) in sampled.iter().enumerate() {
            let source = by_province.get(name).ok_or_else(|| Error::InvalidData {
                reason: format!("unknown province {name} in resample"),
            })?;
            for row in source {
                let mut copy = (*row).clone();
                copy.province_id = format!("{name}~{k}");
                rows.push(copy);
            }
        }
        PanelDataset::new(rows)
    }
}

// ---------------------------------------------------------------------------
// Model specification
// ---------------------------------------------------------------------------

/// Income interaction variant of the interacted-average form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncomeKind {
    None,
    Level,
    Log,
}

/// Functional form of the weather response.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalForm {
    /// Polynomial of the given order (2..=7) in hourly temperature terms.
    Polynomial { order: usize },
    /// Temperature bins over interior `edges`, with `omitted_bin` (0-based)
    /// absorbed into the intercept.
    Bins { edges: Vec<f64>, omitted_bin: usize },
    /// Heating/cooling degree days around the given thresholds.
    DegreeDays { hdd_threshold: f64, cdd_threshold: f64 },
    /// Annual mean temperature interacted with province climatology (and
    /// optionally income), the alternative formulation.
    InteractedAverage { income: IncomeKind },
}

/// Which fixed effects to absorb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FixedEffects {
    pub province: bool,
    pub year: bool,
    pub region_year: bool,
    pub poor_year: bool,
}

impl FixedEffects {
    pub fn two_way() -> Self {
        Self { province: true, year: true, ..Self::default() }
    }

    pub fn count(&self) -> usize {
        [self.province, self.year, self.region_year, self.poor_year]
            .iter()
            .filter(|b| **b)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interaction {
    None,
    LowIncome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trends {
    None,
    QuadraticCountry,
    QuadraticProvince,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecipControl {
    None,
    Matched,
}

/// Complete model description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub form: FunctionalForm,
    pub n_lags: usize,
    pub interaction: Interaction,
    pub fixed_effects: FixedEffects,
    pub trends: Trends,
    pub precip_control: PrecipControl,
    pub lagged_dependent: bool,
}

impl ModelSpec {
    /// Baseline: two-way fixed effects with matched precipitation controls.
    pub fn baseline(form: FunctionalForm) -> Self {
        Self {
            form,
            n_lags: 0,
            interaction: Interaction::None,
            fixed_effects: FixedEffects::two_way(),
            trends: Trends::None,
            precip_control: PrecipControl::Matched,
            lagged_dependent: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.form {
            FunctionalForm::Polynomial { order } => {
                if !(2..=7).contains(order) {
                    return Err(Error::InvalidData {
                        reason: format!("polynomial order {order} outside 2..=7"),
                    });
                }
            }
            FunctionalForm::Bins { edges, omitted_bin } => {
                if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidBins {
                        reason: "bin edges must be non-empty and ascending".to_string(),
                    });
                }
                if *omitted_bin > edges.len() {
                    return Err(Error::InvalidBins {
                        reason: format!(
                            "omitted bin {omitted_bin} outside 0..={}",
                            edges.len()
                        ),
                    });
                }
            }
            FunctionalForm::DegreeDays { hdd_threshold, cdd_threshold } => {
                if hdd_threshold > cdd_threshold {
                    return Err(Error::InvalidData {
                        reason: "hdd threshold above cdd threshold".to_string(),
                    });
                }
            }
            FunctionalForm::InteractedAverage { .. } => {}
        }
        if self.n_lags > 5 {
            return Err(Error::InvalidData {
                reason: format!("n_lags {} above 5", self.n_lags),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Design matrix
// ---------------------------------------------------------------------------

/// Which income group a column belongs to under a low-income interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    All,
    Low,
    High,
}

/// Semantic role of a design column.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    Intercept,
    TempPoly(usize),
    TempBin(usize),
    Hdd,
    Cdd,
    TempAvg,
    TempAvgXAvgTemp,
    TempAvgXIncome,
    Precip,
    PrecipSq,
    PrecipBin(usize),
    PrecipXAvgPrecip,
    PrecipXIncome,
    TrendLinear(Option<String>),
    TrendSquare(Option<String>),
    LaggedDv,
}

impl ColumnKind {
    pub fn is_temperature(&self) -> bool {
        matches!(
            self,
            ColumnKind::TempPoly(_)
                | ColumnKind::TempBin(_)
                | ColumnKind::Hdd
                | ColumnKind::Cdd
                | ColumnKind::TempAvg
                | ColumnKind::TempAvgXAvgTemp
                | ColumnKind::TempAvgXIncome
        )
    }

    pub fn is_precipitation(&self) -> bool {
        matches!(
            self,
            ColumnKind::Precip
                | ColumnKind::PrecipSq
                | ColumnKind::PrecipBin(_)
                | ColumnKind::PrecipXAvgPrecip
                | ColumnKind::PrecipXIncome
        )
    }
}

/// Name, role, lag, and regime of one design column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub lag: usize,
    pub regime: Regime,
}

/// One fixed-effect factor: row-to-group assignment plus group labels.
#[derive(Debug, Clone)]
pub struct FeFactor {
    pub kind: &'static str,
    pub group_of: Vec<usize>,
    pub labels: Vec<String>,
}

impl FeFactor {
    fn build(kind: &'static str, keys: Vec<String>) -> Self {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        for key in &keys {
            let next = index.len();
            index.entry(key.clone()).or_insert(next);
        }
        let mut labels = alloc::vec![String::new(); index.len()];
        for (label, idx) in &index {
            labels[*idx] = label.clone();
        }
        let group_of = keys.iter().map(|k| index[k]).collect();
        Self { kind, group_of, labels }
    }

    pub fn n_groups(&self) -> usize {
        self.labels.len()
    }
}

/// Assembled regression system before absorption.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub columns: Vec<ColumnMeta>,
    /// (province, year) of each row, in row order.
    pub row_keys: Vec<(String, i32)>,
    pub cluster_of: Vec<usize>,
    pub cluster_labels: Vec<String>,
    pub fe_factors: Vec<FeFactor>,
}

fn lag_suffix(lag: usize) -> String {
    if lag == 0 {
        String::new()
    } else {
        format!("_lag{lag}")
    }
}

fn regime_suffix(regime: Regime) -> &'static str {
    match regime {
        Regime::All => "",
        Regime::Low => "_low",
        Regime::High => "_high",
    }
}

/// Per-province sample averages used by the interacted-average form; income
/// is de-meaned across provinces so temperature terms read at the
/// country-average income.
struct ProvinceAverages {
    avg_temp: BTreeMap<String, f64>,
    avg_precip: BTreeMap<String, f64>,
    income_dm: BTreeMap<String, f64>,
}

fn province_averages(data: &PanelDataset, income: IncomeKind) -> Result<ProvinceAverages> {
    let mut temp: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut precip: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut inc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for row in data.rows() {
        let days = days_in_year(row.year) as f64;
        let t_mean = row.regressors.poly_terms.first().ok_or_else(|| Error::InvalidData {
            reason: "interacted-average form needs the linear temperature term".to_string(),
        })? / days;
        let e = temp.entry(row.province_id.clone()).or_insert((0.0, 0));
        e.0 += t_mean;
        e.1 += 1;
        let e = precip.entry(row.province_id.clone()).or_insert((0.0, 0));
        e.0 += row.regressors.precip_linear;
        e.1 += 1;
        if income != IncomeKind::None {
            let level = row.income_level.ok_or_else(|| Error::InvalidData {
                reason: format!("income level missing for {} {}", row.province_id, row.year),
            })?;
            if !level.is_finite() || level <= 0.0 {
                return Err(Error::InvalidData {
                    reason: format!("invalid income level for {} {}", row.province_id, row.year),
                });
            }
            let e = inc.entry(row.province_id.clone()).or_insert((0.0, 0));
            e.0 += level;
            e.1 += 1;
        }
    }
    let avg_temp: BTreeMap<String, f64> =
        temp.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let avg_precip: BTreeMap<String, f64> =
        precip.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let mut income_dm = BTreeMap::new();
    if income != IncomeKind::None {
        let raw: BTreeMap<String, f64> = inc
            .into_iter()
            .map(|(k, (s, n))| {
                let mean = s / n as f64;
                (k, if income == IncomeKind::Log { libm::log(mean) } else { mean })
            })
            .collect();
        let grand = numeric::mean(raw.values().copied()).unwrap_or(0.0);
        for (k, v) in raw {
            income_dm.insert(k, v - grand);
        }
    }
    Ok(ProvinceAverages { avg_temp, avg_precip, income_dm })
}

/// Weather column templates for one lag: (kind, per-row value extractor).
fn weather_columns(
    spec: &ModelSpec,
    averages: Option<&ProvinceAverages>,
) -> Result<Vec<(ColumnKind, String)>> {
    let mut temp: Vec<(ColumnKind, String)> = Vec::new();
    let mut precip: Vec<(ColumnKind, String)> = Vec::new();
    match &spec.form {
        FunctionalForm::Polynomial { order } => {
            for m in 1..=*order {
                temp.push((ColumnKind::TempPoly(m), format!("temp{m}")));
            }
            if spec.precip_control == PrecipControl::Matched {
                precip.push((ColumnKind::Precip, "precip".to_string()));
                precip.push((ColumnKind::PrecipSq, "precip_sq".to_string()));
            }
        }
        FunctionalForm::Bins { edges, omitted_bin } => {
            for b in 0..=edges.len() {
                if b != *omitted_bin {
                    temp.push((ColumnKind::TempBin(b), format!("tbin{}", b + 1)));
                }
            }
            if spec.precip_control == PrecipControl::Matched {
                // The zero-precipitation bin is the reference category.
                precip.push((ColumnKind::PrecipBin(usize::MAX), String::new()));
            }
        }
        FunctionalForm::DegreeDays { .. } => {
            temp.push((ColumnKind::Hdd, "hdd".to_string()));
            temp.push((ColumnKind::Cdd, "cdd".to_string()));
            if spec.precip_control == PrecipControl::Matched {
                precip.push((ColumnKind::Precip, "precip".to_string()));
            }
        }
        FunctionalForm::InteractedAverage { income } => {
            let _ = averages.ok_or_else(|| Error::InvalidData {
                reason: "interacted-average form requires province averages".to_string(),
            })?;
            temp.push((ColumnKind::TempAvg, "temp".to_string()));
            temp.push((ColumnKind::TempAvgXAvgTemp, "temp_x_avg_temp".to_string()));
            if *income != IncomeKind::None {
                temp.push((ColumnKind::TempAvgXIncome, "temp_x_income".to_string()));
            }
            if spec.precip_control == PrecipControl::Matched {
                precip.push((ColumnKind::Precip, "precip".to_string()));
                precip.push((ColumnKind::PrecipXAvgPrecip, "precip_x_avg_precip".to_string()));
                if *income != IncomeKind::None {
                    precip.push((ColumnKind::PrecipXIncome, "precip_x_income".to_string()));
                }
            }
        }
    }
    temp.extend(precip);
    Ok(temp)
}

fn column_value(
    kind: &ColumnKind,
    row: &PanelRow,
    reg: &AnnualRegressorSet,
    averages: Option<&ProvinceAverages>,
) -> Result<f64> {
    let val = match kind {
        ColumnKind::TempPoly(m) => {
            *reg.poly_terms.get(m - 1).ok_or_else(|| Error::InvalidData {
                reason: format!(
                    "row {} {}: polynomial term {m} not present in regressors",
                    row.province_id, row.year
                ),
            })?
        }
        ColumnKind::TempBin(b) => *reg.bin_days.get(*b).ok_or_else(|| Error::InvalidData {
            reason: format!("row {} {}: bin {b} missing", row.province_id, row.year),
        })?,
        ColumnKind::Hdd => reg.hdd,
        ColumnKind::Cdd => reg.cdd,
        ColumnKind::Precip => reg.precip_linear,
        ColumnKind::PrecipSq => reg.precip_sq,
        ColumnKind::PrecipBin(b) => *reg.precip_bin_days.get(*b).ok_or_else(|| Error::InvalidData {
            reason: format!("row {} {}: precip bin {b} missing", row.province_id, row.year),
        })?,
        ColumnKind::TempAvg => {
            reg.poly_terms.first().ok_or_else(|| Error::InvalidData {
                reason: "missing linear temperature term".to_string(),
            })? / days_in_year(reg.year) as f64
        }
        ColumnKind::TempAvgXAvgTemp => {
            let t = reg.poly_terms[0] / days_in_year(reg.year) as f64;
            t * averages.unwrap().avg_temp[&row.province_id]
        }
        ColumnKind::TempAvgXIncome => {
            let t = reg.poly_terms[0] / days_in_year(reg.year) as f64;
            t * averages.unwrap().income_dm[&row.province_id]
        }
        ColumnKind::PrecipXAvgPrecip => {
            reg.precip_linear * averages.unwrap().avg_precip[&row.province_id]
        }
        ColumnKind::PrecipXIncome => {
            reg.precip_linear * averages.unwrap().income_dm[&row.province_id]
        }
        ColumnKind::Intercept
        | ColumnKind::TrendLinear(_)
        | ColumnKind::TrendSquare(_)
        | ColumnKind::LaggedDv => {
            return Err(Error::InvalidData {
                reason: "column kind not produced from regressors".to_string(),
            })
        }
    };
    Ok(val)
}

/// Builds the design matrix for `spec` over `data`.
///
/// Column order: temperature terms by lag, precipitation terms by lag (each
/// split into adjacent low/high copies under a low-income interaction),
/// trend columns, lagged dependent variable. Rows are ordered by
/// (province, year); rows whose lags are unavailable are dropped.
pub fn build_design(spec: &ModelSpec, data: &PanelDataset) -> Result<Design> {
    spec.validate()?;
    let averages = match &spec.form {
        FunctionalForm::InteractedAverage { income } => Some(province_averages(data, *income)?),
        _ => None,
    };

    let by_key: BTreeMap<(&str, i32), &PanelRow> = data
        .rows()
        .iter()
        .map(|r| ((r.province_id.as_str(), r.year), r))
        .collect();

    // Keep rows with a complete lag window (and prior-year outcome when a
    // lagged dependent variable is requested).
    let mut kept: Vec<&PanelRow> = Vec::new();
    for row in data.rows() {
        let lags_ok = (0..=spec.n_lags)
            .all(|l| by_key.contains_key(&(row.province_id.as_str(), row.year - l as i32)));
        let dv_ok = !spec.lagged_dependent
            || by_key.contains_key(&(row.province_id.as_str(), row.year - 1));
        if lags_ok && dv_ok {
            kept.push(row);
        }
    }
    if kept.is_empty() {
        return Err(Error::TooFewObservations {
            reason: "no rows with complete lag windows".to_string(),
        });
    }

    // Column plan.
    let templates = weather_columns(spec, averages.as_ref())?;
    let regimes: &[Regime] = match spec.interaction {
        Interaction::None => &[Regime::All],
        Interaction::LowIncome => &[Regime::Low, Regime::High],
    };
    if spec.interaction == Interaction::LowIncome {
        let mut low = alloc::collections::BTreeSet::new();
        let mut high = alloc::collections::BTreeSet::new();
        for row in &kept {
            if row.low_income {
                low.insert(&row.province_id);
            } else {
                high.insert(&row.province_id);
            }
        }
        if low.len() < 2 || high.len() < 2 {
            return Err(Error::DegenerateClustering {
                reason: format!(
                    "income groups need at least two provinces each (low {}, high {})",
                    low.len(),
                    high.len()
                ),
            });
        }
    }

    let n_precip_bins = kept[0].regressors.precip_bin_days.len();
    let mut columns: Vec<ColumnMeta> = Vec::new();
    let push_weather = |columns: &mut Vec<ColumnMeta>, temp_block: bool| {
        for lag in 0..=spec.n_lags {
            for (kind, base) in &templates {
                let is_temp = kind.is_temperature();
                if is_temp != temp_block {
                    continue;
                }
                // Expand the matched precipitation bins to concrete columns.
                let expanded: Vec<(ColumnKind, String)> =
                    if matches!(kind, ColumnKind::PrecipBin(b) if *b == usize::MAX) {
                        (1..n_precip_bins)
                            .map(|b| (ColumnKind::PrecipBin(b), format!("rbin{}", b + 1)))
                            .collect()
                    } else {
                        alloc::vec![(kind.clone(), base.clone())]
                    };
                for (kind, base) in expanded {
                    for regime in regimes {
                        columns.push(ColumnMeta {
                            name: format!("{base}{}{}", lag_suffix(lag), regime_suffix(*regime)),
                            kind: kind.clone(),
                            lag,
                            regime: *regime,
                        });
                    }
                }
            }
        }
    };
    push_weather(&mut columns, true);
    push_weather(&mut columns, false);

    let min_year = kept.iter().map(|r| r.year).min().unwrap();
    match spec.trends {
        Trends::None => {}
        Trends::QuadraticCountry => {
            columns.push(ColumnMeta {
                name: "trend".to_string(),
                kind: ColumnKind::TrendLinear(None),
                lag: 0,
                regime: Regime::All,
            });
            columns.push(ColumnMeta {
                name: "trend_sq".to_string(),
                kind: ColumnKind::TrendSquare(None),
                lag: 0,
                regime: Regime::All,
            });
        }
        Trends::QuadraticProvince => {
            let mut provinces: Vec<&str> = kept.iter().map(|r| r.province_id.as_str()).collect();
            provinces.dedup();
            for p in provinces {
                columns.push(ColumnMeta {
                    name: format!("trend_{p}"),
                    kind: ColumnKind::TrendLinear(Some(p.to_string())),
                    lag: 0,
                    regime: Regime::All,
                });
                columns.push(ColumnMeta {
                    name: format!("trend_sq_{p}"),
                    kind: ColumnKind::TrendSquare(Some(p.to_string())),
                    lag: 0,
                    regime: Regime::All,
                });
            }
        }
    }
    if spec.lagged_dependent {
        columns.push(ColumnMeta {
            name: "g_lag1".to_string(),
            kind: ColumnKind::LaggedDv,
            lag: 1,
            regime: Regime::All,
        });
    }
    if spec.fixed_effects.count() == 0 {
        columns.push(ColumnMeta {
            name: "const".to_string(),
            kind: ColumnKind::Intercept,
            lag: 0,
            regime: Regime::All,
        });
    }

    // Fill the matrix.
    let n = kept.len();
    let k = columns.len();
    let mut x = DMatrix::zeros(n, k);
    let mut y = DVector::zeros(n);
    for (i, row) in kept.iter().enumerate() {
        y[i] = row.g;
        for (j, col) in columns.iter().enumerate() {
            let value = match &col.kind {
                ColumnKind::Intercept => 1.0,
                ColumnKind::TrendLinear(scope) => match scope {
                    Some(p) if p != &row.province_id => 0.0,
                    _ => (row.year - min_year + 1) as f64,
                },
                ColumnKind::TrendSquare(scope) => match scope {
                    Some(p) if p != &row.province_id => 0.0,
                    _ => {
                        let t = (row.year - min_year + 1) as f64;
                        t * t
                    }
                },
                ColumnKind::LaggedDv => by_key[&(row.province_id.as_str(), row.year - 1)].g,
                kind => {
                    let source = by_key[&(row.province_id.as_str(), row.year - col.lag as i32)];
                    let raw = column_value(kind, row, &source.regressors, averages.as_ref())?;
                    match col.regime {
                        Regime::All => raw,
                        Regime::Low => {
                            if row.low_income {
                                raw
                            } else {
                                0.0
                            }
                        }
                        Regime::High => {
                            if row.low_income {
                                0.0
                            } else {
                                raw
                            }
                        }
                    }
                }
            };
            x[(i, j)] = value;
        }
    }

    // Cluster assignment (province) and fixed-effect factors.
    let cluster_keys: Vec<String> = kept.iter().map(|r| r.province_id.clone()).collect();
    let cluster_factor = FeFactor::build("cluster", cluster_keys);
    let mut fe_factors = Vec::new();
    if spec.fixed_effects.province {
        fe_factors.push(FeFactor::build(
            "province",
            kept.iter().map(|r| r.province_id.clone()).collect(),
        ));
    }
    if spec.fixed_effects.year {
        fe_factors.push(FeFactor::build(
            "year",
            kept.iter().map(|r| r.year.to_string()).collect(),
        ));
    }
    if spec.fixed_effects.region_year {
        fe_factors.push(FeFactor::build(
            "region_year",
            kept.iter().map(|r| format!("{}:{}", r.region_id, r.year)).collect(),
        ));
    }
    if spec.fixed_effects.poor_year {
        fe_factors.push(FeFactor::build(
            "poor_year",
            kept.iter()
                .map(|r| format!("{}:{}", u8::from(r.low_income), r.year))
                .collect(),
        ));
    }

    Ok(Design {
        x,
        y,
        columns,
        row_keys: kept.iter().map(|r| (r.province_id.clone(), r.year)).collect(),
        cluster_of: cluster_factor.group_of,
        cluster_labels: cluster_factor.labels,
        fe_factors,
    })
}

// ---------------------------------------------------------------------------
// Fixed-effect absorption
// ---------------------------------------------------------------------------

/// Alternating within-transformation of `x` and `y` over the factors.
///
/// Demeans every column by each factor in turn until the largest applied
/// group mean falls below 1e-10, which reproduces the residuals of a full
/// dummy-variable regression. Returns the sweep count alongside the
/// transformed system.
pub fn absorb_fixed_effects(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    factors: &[FeFactor],
) -> Result<(DMatrix<f64>, DVector<f64>, usize)> {
    let mut xt = x.clone();
    let mut yt = y.clone();
    if factors.is_empty() {
        return Ok((xt, yt, 0));
    }
    let n = x.nrows();
    for factor in factors {
        if factor.group_of.len() != n {
            return Err(Error::InvalidData {
                reason: "factor length does not match row count".to_string(),
            });
        }
        if factor.n_groups() == 0 {
            return Err(Error::InvalidData {
                reason: "fixed-effect factor with no groups".to_string(),
            });
        }
    }
    let mut counts: Vec<Vec<f64>> = factors
        .iter()
        .map(|f| {
            let mut c = alloc::vec![0.0; f.n_groups()];
            for &g in &f.group_of {
                c[g] += 1.0;
            }
            c
        })
        .collect();
    for c in counts.iter_mut().flatten() {
        debug_assert!(*c > 0.0);
    }

    let mut last_change = f64::INFINITY;
    for sweep in 1..=ABSORB_MAX_SWEEPS {
        let mut max_change = 0.0_f64;
        for (factor, count) in factors.iter().zip(&counts) {
            let mut means = alloc::vec![0.0; factor.n_groups()];
            // y column.
            for (i, &g) in factor.group_of.iter().enumerate() {
                means[g] += yt[i];
            }
            for (m, c) in means.iter_mut().zip(count) {
                *m /= c;
            }
            for (i, &g) in factor.group_of.iter().enumerate() {
                yt[i] -= means[g];
            }
            for m in &means {
                max_change = max_change.max(libm::fabs(*m));
            }
            // x columns.
            for j in 0..xt.ncols() {
                let mut means = alloc::vec![0.0; factor.n_groups()];
                for (i, &g) in factor.group_of.iter().enumerate() {
                    means[g] += xt[(i, j)];
                }
                for (m, c) in means.iter_mut().zip(count) {
                    *m /= c;
                }
                for (i, &g) in factor.group_of.iter().enumerate() {
                    xt[(i, j)] -= means[g];
                }
                for m in &means {
                    max_change = max_change.max(libm::fabs(*m));
                }
            }
        }
        if max_change < ABSORB_TOL {
            return Ok((xt, yt, sweep));
        }
        last_change = max_change;
    }
    Err(Error::ConvergenceFailure { sweeps: ABSORB_MAX_SWEEPS, last_change })
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

/// Recovered fixed-effect values in the canonical normalization: a grand
/// intercept plus factor effects that each average to zero across levels.
#[derive(Debug, Clone, Default)]
pub struct FeEstimates {
    pub mu: f64,
    pub factors: Vec<(&'static str, BTreeMap<String, f64>)>,
}

impl FeEstimates {
    /// Effect of `label` within `kind`, if that level was in the sample.
    pub fn effect(&self, kind: &str, label: &str) -> Option<f64> {
        self.factors
            .iter()
            .find(|(k, _)| *k == kind)
            .and_then(|(_, m)| m.get(label).copied())
    }

    /// Unweighted mean effect of a factor (zero in this normalization; kept
    /// explicit because out-of-sample prediction is defined through it).
    pub fn mean_effect(&self, kind: &str) -> f64 {
        self.factors
            .iter()
            .find(|(k, _)| *k == kind)
            .and_then(|(_, m)| numeric::mean(m.values().copied()))
            .unwrap_or(0.0)
    }
}

/// Fit output: named coefficients, cluster-robust covariance, fit statistics
/// and per-cluster residuals.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub columns: Vec<ColumnMeta>,
    pub beta: DVector<f64>,
    pub vcov: DMatrix<f64>,
    pub n_obs: usize,
    pub r2: f64,
    pub within_r2: f64,
    pub cluster_count: usize,
    pub residuals_by_cluster: Vec<(String, Vec<f64>)>,
    pub fixed_effects: FeEstimates,
}

impl FitResult {
    /// Reassembles a result from stored parts (deserialized output,
    /// published-coefficient fixtures). No refitting is performed.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        spec: ModelSpec,
        columns: Vec<ColumnMeta>,
        beta: DVector<f64>,
        vcov: DMatrix<f64>,
        n_obs: usize,
        r2: f64,
        within_r2: f64,
        cluster_count: usize,
    ) -> Result<Self> {
        if columns.len() != beta.len() || vcov.nrows() != beta.len() || vcov.ncols() != beta.len() {
            return Err(Error::InvalidData {
                reason: "coefficient, name, and covariance dimensions disagree".to_string(),
            });
        }
        Ok(Self {
            spec,
            columns,
            beta,
            vcov,
            n_obs,
            r2,
            within_r2,
            cluster_count,
            residuals_by_cluster: Vec::new(),
            fixed_effects: FeEstimates::default(),
        })
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .map(|j| self.beta[j])
    }

    pub fn std_err(&self, name: &str) -> Option<f64> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .map(|j| libm::sqrt(self.vcov[(j, j)].max(0.0)))
    }

    /// Annual weather response Σ β_j · x_j(reg) over the temperature columns
    /// of one lag and regime, evaluated with an arbitrary coefficient vector
    /// (point estimates or a bootstrap draw).
    pub fn annual_temperature_response(
        &self,
        values: &[f64],
        reg: &AnnualRegressorSet,
        lag: usize,
        regime: Regime,
    ) -> Result<f64> {
        debug_assert_eq!(values.len(), self.columns.len());
        let mut acc = numeric::Accumulator::new();
        let probe = PanelRow {
            province_id: reg.province_id.clone(),
            year: reg.year,
            g: 0.0,
            regressors: reg.clone(),
            region_id: String::new(),
            low_income: regime == Regime::Low,
            income_level: None,
            sector_growth: BTreeMap::new(),
        };
        for (j, col) in self.columns.iter().enumerate() {
            if col.lag != lag || !col.kind.is_temperature() {
                continue;
            }
            let applies = match (col.regime, regime) {
                (Regime::All, _) => true,
                (Regime::Low, Regime::Low) => true,
                (Regime::High, Regime::High) => true,
                _ => false,
            };
            if !applies {
                continue;
            }
            if matches!(
                col.kind,
                ColumnKind::TempAvgXAvgTemp | ColumnKind::TempAvgXIncome
            ) {
                return Err(Error::InvalidData {
                    reason: "annual response undefined for the interacted-average form".to_string(),
                });
            }
            acc.add(values[j] * column_value(&col.kind, &probe, reg, None)?);
        }
        Ok(acc.total())
    }

    pub fn values(&self) -> Vec<f64> {
        self.beta.iter().copied().collect()
    }
}

/// Cluster-robust sandwich covariance on an (absorbed) design.
///
/// `k_model` is the total parameter count for the small-sample factor,
/// including absorbed fixed-effect degrees of freedom. Requires at least
/// two clusters.
pub fn cluster_robust_vcov(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    cluster_of: &[usize],
    k_model: usize,
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let k = x.ncols();
    if cluster_of.len() != n {
        return Err(Error::InvalidData {
            reason: "cluster assignment length mismatch".to_string(),
        });
    }
    let n_clusters = cluster_of.iter().copied().max().map_or(0, |m| m + 1);
    if n_clusters < 2 {
        return Err(Error::DegenerateClustering {
            reason: format!("{n_clusters} cluster(s); need at least 2"),
        });
    }
    if n <= k_model {
        return Err(Error::TooFewObservations {
            reason: format!("n = {n} does not exceed model dof {k_model}"),
        });
    }

    let xtx = x.transpose() * x;
    let xtx_inv = xtx.clone().try_inverse().ok_or_else(|| Error::CollinearDesign {
        columns: "X'X singular in covariance".to_string(),
    })?;

    // Meat: Σ_g (X_g' e_g)(X_g' e_g)'.
    let mut scores = DMatrix::zeros(n_clusters, k);
    for i in 0..n {
        let g = cluster_of[i];
        for j in 0..k {
            scores[(g, j)] += x[(i, j)] * residuals[i];
        }
    }
    let meat = scores.transpose() * &scores;

    let gf = n_clusters as f64;
    let nf = n as f64;
    let correction = gf / (gf - 1.0) * (nf - 1.0) / (nf - k_model as f64);
    let mut vcov = &xtx_inv * meat * &xtx_inv * correction;
    // Symmetrize against accumulated rounding.
    let vt = vcov.transpose();
    vcov = (vcov + vt) * 0.5;
    Ok(vcov)
}

/// Recovers intercept and fixed-effect values from raw residuals by
/// alternating group means, then renormalizes each factor to mean zero.
fn recover_fixed_effects(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    factors: &[FeFactor],
) -> FeEstimates {
    let n = y.len();
    let mut resid: Vec<f64> = (0..n).map(|i| y[i] - x.row(i).dot(&beta.transpose())).collect();
    let mu0 = numeric::mean(resid.iter().copied()).unwrap_or(0.0);
    for r in &mut resid {
        *r -= mu0;
    }
    let mut effects: Vec<Vec<f64>> = factors.iter().map(|f| alloc::vec![0.0; f.n_groups()]).collect();
    if !factors.is_empty() {
        for _ in 0..ABSORB_MAX_SWEEPS {
            let mut max_change = 0.0_f64;
            for (f, factor) in factors.iter().enumerate() {
                let mut sums = alloc::vec![0.0; factor.n_groups()];
                let mut counts = alloc::vec![0.0; factor.n_groups()];
                for (i, &g) in factor.group_of.iter().enumerate() {
                    sums[g] += resid[i];
                    counts[g] += 1.0;
                }
                for g in 0..factor.n_groups() {
                    let m = sums[g] / counts[g];
                    effects[f][g] += m;
                    max_change = max_change.max(libm::fabs(m));
                    sums[g] = m;
                }
                for (i, &g) in factor.group_of.iter().enumerate() {
                    resid[i] -= sums[g];
                }
            }
            if max_change < ABSORB_TOL {
                break;
            }
        }
    }
    // Canonical normalization: factor effects average to zero, remainder in mu.
    let mut mu = mu0;
    let mut maps = Vec::new();
    for (factor, eff) in factors.iter().zip(effects) {
        let mean = numeric::mean(eff.iter().copied()).unwrap_or(0.0);
        mu += mean;
        let map: BTreeMap<String, f64> = factor
            .labels
            .iter()
            .cloned()
            .zip(eff.iter().map(|e| e - mean))
            .collect();
        maps.push((factor.kind, map));
    }
    FeEstimates { mu, factors: maps }
}

/// Model degrees of freedom: design columns plus absorbed fixed-effect
/// levels net of the one redundancy per additional factor.
fn model_dof(k_x: usize, factors: &[FeFactor]) -> usize {
    if factors.is_empty() {
        k_x
    } else {
        let levels: usize = factors.iter().map(FeFactor::n_groups).sum();
        k_x + levels - (factors.len() - 1)
    }
}

fn solve_ols(
    xt: &DMatrix<f64>,
    yt: &DVector<f64>,
    columns: &[ColumnMeta],
) -> Result<DVector<f64>> {
    let svd = xt.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_RTOL * smax) {
        // Name the columns loading on the null space.
        let vt = svd.v_t.as_ref().expect("svd computed with vectors");
        let mut offenders: Vec<&str> = Vec::new();
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s <= RANK_RTOL * smax {
                let row = vt.row(i);
                let peak = row.iter().fold(0.0_f64, |a, b| a.max(libm::fabs(*b)));
                for (j, v) in row.iter().enumerate() {
                    if libm::fabs(*v) > 0.5 * peak {
                        offenders.push(&columns[j].name);
                    }
                }
            }
        }
        offenders.sort_unstable();
        offenders.dedup();
        return Err(Error::CollinearDesign { columns: offenders.join(", ") });
    }
    svd.solve(yt, RANK_RTOL * smax)
        .map_err(|e| Error::CollinearDesign { columns: e.to_string() })
}

/// Fits `spec` on `data`: absorb fixed effects, solve by SVD, and attach the
/// cluster-robust covariance and fit statistics.
pub fn fit(spec: &ModelSpec, data: &PanelDataset) -> Result<FitResult> {
    let design = build_design(spec, data)?;
    fit_design(spec, design)
}

/// Fit on an already-built design (bootstrap refits reuse this entry).
pub fn fit_design(spec: &ModelSpec, design: Design) -> Result<FitResult> {
    let Design { x, y, columns, cluster_of, cluster_labels, fe_factors, row_keys } = design;
    let n = x.nrows();
    let k_x = x.ncols();
    if n <= k_x {
        return Err(Error::TooFewObservations {
            reason: format!("{n} rows for {k_x} design columns"),
        });
    }

    let (xt, yt, _sweeps) = absorb_fixed_effects(&x, &y, &fe_factors)?;
    let beta = solve_ols(&xt, &yt, &columns)?;

    let fitted = &xt * &beta;
    let resid = &yt - &fitted;

    let k_model = model_dof(k_x, &fe_factors);
    let vcov = cluster_robust_vcov(&xt, &resid, &cluster_of, k_model)?;

    // R² on the raw outcome (fixed effects in the fit), within-R² on the
    // demeaned system.
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let yt_mean = yt.iter().sum::<f64>() / n as f64;
    let sst_within: f64 = yt.iter().map(|v| (v - yt_mean) * (v - yt_mean)).sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };
    let within_r2 = if sst_within > 0.0 { 1.0 - ssr / sst_within } else { 0.0 };

    let n_clusters = cluster_labels.len();
    let mut residuals_by_cluster: Vec<(String, Vec<f64>)> =
        cluster_labels.iter().map(|l| (l.clone(), Vec::new())).collect();
    for (i, &g) in cluster_of.iter().enumerate() {
        residuals_by_cluster[g].1.push(resid[i]);
    }

    let fixed_effects = recover_fixed_effects(&y, &x, &beta, &fe_factors);
    let _ = row_keys;

    Ok(FitResult {
        spec: spec.clone(),
        columns,
        beta,
        vcov,
        n_obs: n,
        r2,
        within_r2,
        cluster_count: n_clusters,
        residuals_by_cluster,
        fixed_effects,
    })
}

/// Fits with the low-income interaction switched on.
pub fn fit_interacted(spec: &ModelSpec, data: &PanelDataset) -> Result<FitResult> {
    let mut spec = spec.clone();
    spec.interaction = Interaction::LowIncome;
    fit(&spec, data)
}

/// Fits the interacted-average (alternative) formulation under the baseline
/// fixed effects; see [`alternative_marginal_effect`] for its headline
/// derived quantity.
pub fn fit_alternative_formulation(data: &PanelDataset, income: IncomeKind) -> Result<FitResult> {
    let spec = ModelSpec::baseline(FunctionalForm::InteractedAverage { income });
    fit(&spec, data)
}

// ---------------------------------------------------------------------------
// Response evaluation
// ---------------------------------------------------------------------------

/// A point on the response curve: the growth effect of one day at
/// `temperature` relative to a day at `reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseEval {
    pub temperature: f64,
    pub reference: f64,
    /// Percentage points of annual growth per day.
    pub effect: f64,
    pub std_err: f64,
    pub n_lags_included: usize,
}

fn check_support(t: f64) -> Result<()> {
    if !(RESPONSE_SUPPORT.0..=RESPONSE_SUPPORT.1).contains(&t) {
        return Err(Error::InvalidData {
            reason: format!(
                "temperature {t} outside response support [{}, {}]",
                RESPONSE_SUPPORT.0, RESPONSE_SUPPORT.1
            ),
        });
    }
    Ok(())
}

/// Loading vector c with effect = c'β for a single-day response.
fn response_contrast(
    fit: &FitResult,
    t: f64,
    reference: f64,
    lags: usize,
    regime: Regime,
) -> Result<DVector<f64>> {
    let mut c = DVector::zeros(fit.beta.len());
    let interacted = fit
        .columns
        .iter()
        .any(|col| col.regime != Regime::All && col.kind.is_temperature());
    if interacted && regime == Regime::All {
        return Err(Error::InvalidData {
            reason: "interacted fit: evaluate with an explicit income regime".to_string(),
        });
    }
    for (j, col) in fit.columns.iter().enumerate() {
        if col.lag > lags || !col.kind.is_temperature() {
            continue;
        }
        let applies = match (col.regime, regime) {
            (Regime::All, _) => true,
            (Regime::Low, Regime::Low) | (Regime::High, Regime::High) => true,
            _ => false,
        };
        if !applies {
            continue;
        }
        let load = match (&fit.spec.form, &col.kind) {
            (FunctionalForm::Polynomial { .. }, ColumnKind::TempPoly(m)) => {
                let mut tp = 1.0;
                let mut rp = 1.0;
                for _ in 0..*m {
                    tp *= t;
                    rp *= reference;
                }
                tp - rp
            }
            (FunctionalForm::Bins { edges, omitted_bin }, ColumnKind::TempBin(b)) => {
                let bt = crate::weather::bin_index(t, edges);
                let br = crate::weather::bin_index(reference, edges);
                let mut load = 0.0;
                if *b == bt && bt != *omitted_bin {
                    load += 1.0;
                }
                if *b == br && br != *omitted_bin {
                    load -= 1.0;
                }
                load
            }
            (FunctionalForm::DegreeDays { hdd_threshold, .. }, ColumnKind::Hdd) => {
                (hdd_threshold - t).max(0.0) - (hdd_threshold - reference).max(0.0)
            }
            (FunctionalForm::DegreeDays { cdd_threshold, .. }, ColumnKind::Cdd) => {
                (t - cdd_threshold).max(0.0) - (reference - cdd_threshold).max(0.0)
            }
            (FunctionalForm::InteractedAverage { .. }, _) => {
                return Err(Error::InvalidData {
                    reason: "single-day response undefined for the interacted-average form; use alternative_marginal_effect".to_string(),
                })
            }
            _ => 0.0,
        };
        c[j] = load;
    }
    Ok(c)
}

/// Cumulative effect of a day at `t` versus `reference` over lags 0..=`lags`,
/// with a delta-method standard error.
pub fn response_at(fit: &FitResult, t: f64, reference: f64, lags: usize) -> Result<ResponseEval> {
    response_at_regime(fit, t, reference, lags, Regime::All)
}

/// [`response_at`] restricted to one income group of an interacted fit.
pub fn response_at_regime(
    fit: &FitResult,
    t: f64,
    reference: f64,
    lags: usize,
    regime: Regime,
) -> Result<ResponseEval> {
    check_support(t)?;
    check_support(reference)?;
    if lags > fit.spec.n_lags {
        return Err(Error::InvalidData {
            reason: format!("requested {lags} lags; model has {}", fit.spec.n_lags),
        });
    }
    let c = response_contrast(fit, t, reference, lags, regime)?;
    let effect = c.dot(&fit.beta);
    let var = (c.transpose() * &fit.vcov * &c)[(0, 0)];
    Ok(ResponseEval {
        temperature: t,
        reference,
        effect,
        std_err: libm::sqrt(var.max(0.0)),
        n_lags_included: lags,
    })
}

/// Growth-rate change per degree of sustained warming, in percent per °C:
/// the single-day response scaled to a full year and per degree.
pub fn marginal_warming_rate(fit: &FitResult, eval_t: f64, reference: f64) -> Result<f64> {
    if eval_t == reference {
        return Err(Error::InvalidData {
            reason: "marginal rate undefined at the reference temperature".to_string(),
        });
    }
    let eval = response_at(fit, eval_t, reference, fit.spec.n_lags)?;
    Ok(eval.effect * 365.0 / (eval_t - reference))
}

/// Marginal effect of temperature at province average temperature `t_bar`
/// under the interacted-average form: β_T + β_TxT̄ · t_bar, with delta-method
/// standard error. Evaluated at country-average income by construction.
pub fn alternative_marginal_effect(fit: &FitResult, t_bar: f64) -> Result<(f64, f64)> {
    if !matches!(fit.spec.form, FunctionalForm::InteractedAverage { .. }) {
        return Err(Error::InvalidData {
            reason: "marginal effect at average temperature requires the interacted-average form".to_string(),
        });
    }
    let mut c = DVector::zeros(fit.beta.len());
    for (j, col) in fit.columns.iter().enumerate() {
        match col.kind {
            ColumnKind::TempAvg => c[j] = 1.0,
            ColumnKind::TempAvgXAvgTemp => c[j] = t_bar,
            _ => {}
        }
    }
    let effect = c.dot(&fit.beta);
    let var = (c.transpose() * &fit.vcov * &c)[(0, 0)];
    Ok((effect, libm::sqrt(var.max(0.0))))
}
