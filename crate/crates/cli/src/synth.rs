//! Synthetic fixture generator.
//!
//! Emits a complete, internally consistent input set at desk scale: gridded
//! hourly weather, population weights, outcomes, a merged panel, projected
//! climate files for a small model ensemble, growth inputs, population
//! shares, bin-specification candidates, and ready-to-run spec and pipeline
//! configs. The outcome is drawn from a quadratic data-generating process
//! on the aggregated regressors themselves, so a downstream fit recovers
//! the seeded coefficients exactly when the noise scale is zero.
//! Generation is deterministic per seed.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use climpanel_core::numeric::Accumulator;
use climpanel_core::projection::Linkage;
use climpanel_core::selection::CandidateBinConfig;
use climpanel_core::weather::{
    annual_bin_days, annual_regressor_set, bin_index, days_in_year, precip_bin_index,
    AnnualRegressorSet, GridHourlySeries, GridSet, PopulationWeight, RegressorConfig, WeightMap,
};

use crate::config::PipelineConfig;
use crate::csvio::{self, GrowthFile, PanelOutRow, RawCell};
use crate::error::{CliError, Result};

/// Parameters of the synthetic world.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n_provinces: usize,
    pub n_years: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub fe_scale: f64,
    pub noise_sd: f64,
    pub seed: u64,
    /// Climate models emitted per emission scenario.
    pub n_models: usize,
    /// Draw count written into the generated pipeline config.
    pub draws: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_provinces: 5,
            n_years: 30,
            beta1: 0.0494,
            beta2: -0.0009,
            rho: 0.0004,
            fe_scale: 0.5,
            noise_sd: 0.3,
            seed: 42,
            n_models: 2,
            draws: 50,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_provinces < 2 {
            return Err(CliError::config("n_provinces must be at least 2"));
        }
        if self.n_years < 2 {
            return Err(CliError::config("n_years must be at least 2"));
        }
        if self.n_models < 1 {
            return Err(CliError::config("n_models must be at least 1"));
        }
        if !(self.noise_sd >= 0.0) || !(self.fe_scale >= 0.0) {
            return Err(CliError::config("noise_sd and fe_scale must be nonnegative"));
        }
        Ok(())
    }

    /// Observed years; the panel always ends at 2022 so projection windows
    /// line up.
    pub fn years(&self) -> std::ops::RangeInclusive<i32> {
        (2022 - self.n_years as i32 + 1)..=2022
    }

    pub fn province_ids(&self) -> Vec<String> {
        (0..self.n_provinces).map(|p| format!("P{p:02}")).collect()
    }
}

/// Default candidate grid: every configuration keeps the reference
/// temperature inside its omitted bin.
pub fn default_candidates() -> Vec<CandidateBinConfig> {
    [(23.0, 5.0), (24.0, 5.0), (25.0, 2.0), (26.0, 1.0)]
        .into_iter()
        .map(|(l, i)| CandidateBinConfig::new(l, i).expect("static candidates are valid"))
        .collect()
}

const PROJECTION_FIRST_YEAR: i32 = 2018;
const PROJECTION_LAST_YEAR: i32 = 2090;

/// Mean-zero diurnal cycle added to the daily level, peaking mid-afternoon.
fn diurnal(hour: u32) -> f64 {
    let phase = 2.0 * std::f64::consts::PI * (hour as f64 - 9.0) / 24.0;
    3.0 * phase.sin()
}

fn seasonal(day_of_year: u32, days: u32) -> f64 {
    let phase = 2.0 * std::f64::consts::PI * (day_of_year as f64 - 1.0) / days as f64;
    4.0 * phase.sin()
}

/// Daily temperature for one province-year; clamped inside the response
/// support so every bin specification stays estimable.
fn draw_daily_temps(rng: &mut ChaCha8Rng, base: f64, year: i32, warming: f64) -> Vec<f64> {
    let days = days_in_year(year);
    (1..=days)
        .map(|d| {
            (base + seasonal(d, days) + rng.gen_range(-9.0..9.0) + warming).clamp(11.05, 40.95)
        })
        .collect()
}

fn draw_daily_precip(rng: &mut ChaCha8Rng, days: u32) -> Vec<f64> {
    (0..days)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.5..60.0) })
        .collect()
}

/// Annual regressors from province-level daily values (constant hourly
/// profile), the route used for projected climate where no grid exists.
fn regressors_from_days(
    province: &str,
    year: i32,
    temps: &[f64],
    precip: &[f64],
    config: &RegressorConfig,
) -> AnnualRegressorSet {
    let mut poly = vec![Accumulator::new(); config.max_order];
    let mut bins = vec![Accumulator::new(); config.bin_edges.len() + 1];
    let mut hdd = Accumulator::new();
    let mut cdd = Accumulator::new();
    for t in temps {
        let mut power = 1.0;
        for acc in poly.iter_mut() {
            power *= t;
            acc.add(power);
        }
        bins[bin_index(*t, &config.bin_edges)].add(1.0);
        hdd.add((config.hdd_threshold - t).max(0.0));
        cdd.add((t - config.cdd_threshold).max(0.0));
    }
    let mut linear = Accumulator::new();
    let mut square = Accumulator::new();
    let mut rbins = vec![Accumulator::new(); config.precip_edges.len() + 2];
    for r in precip {
        linear.add(*r);
        square.add(r * r);
        rbins[precip_bin_index(*r, &config.precip_edges)].add(1.0);
    }
    AnnualRegressorSet {
        province_id: province.to_string(),
        year,
        poly_terms: poly.iter().map(Accumulator::total).collect(),
        bin_days: bins.iter().map(Accumulator::total).collect(),
        hdd: hdd.total(),
        cdd: cdd.total(),
        precip_linear: linear.total(),
        precip_sq: square.total(),
        precip_bin_days: rbins.iter().map(Accumulator::total).collect(),
    }
}

/// Everything the generator wrote, for tests and the pipeline driver.
#[derive(Debug)]
pub struct GeneratedFixture {
    pub pipeline_cfg: std::path::PathBuf,
    pub truth: DgpTruth,
}

/// The seeded coefficients behind the fixture's outcomes.
#[derive(Debug, Clone, Copy)]
pub struct DgpTruth {
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
}

/// Generates the full fixture set under `out_dir`.
pub fn generate(spec: &SyntheticSpec, out_dir: &Path) -> Result<GeneratedFixture> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let provinces = spec.province_ids();
    let reg_config = RegressorConfig::default();
    let candidates = default_candidates();

    // World parameters.
    // Stratified base temperatures: provinces jointly span the warm-to-hot
    // range, so every temperature bin keeps support at any seed.
    let bases: Vec<f64> = (0..spec.n_provinces)
        .map(|p| {
            let center = 21.5 + 8.0 * (p as f64 + 0.5) / spec.n_provinces as f64;
            center + rng.gen_range(-0.5..0.5)
        })
        .collect();
    let alpha: Vec<f64> =
        provinces.iter().map(|_| rng.gen_range(-spec.fe_scale..=spec.fe_scale)).collect();
    let gamma: Vec<f64> =
        spec.years().map(|_| rng.gen_range(-spec.fe_scale..=spec.fe_scale)).collect();

    // Observed weather: one polygon and one grid cell per province.
    let mut cells: BTreeMap<String, RawCell> = BTreeMap::new();
    for p in 0..spec.n_provinces {
        let cell_id = format!("c{p:02}");
        let mut raw = RawCell {
            lat: 6.0 + p as f64,
            lon: 98.0 + p as f64 / 2.0,
            hours: Vec::new(),
            days: Vec::new(),
        };
        for year in spec.years() {
            let temps = draw_daily_temps(&mut rng, bases[p], year, 0.0);
            let precip = draw_daily_precip(&mut rng, days_in_year(year));
            for (d, (t, r)) in temps.iter().zip(&precip).enumerate() {
                let date = NaiveDate::from_yo_opt(year, d as u32 + 1).expect("valid ordinal");
                for h in 0..24 {
                    raw.hours.push((
                        date.and_hms_opt(h, 0, 0).expect("valid hour"),
                        t + diurnal(h),
                    ));
                }
                raw.days.push((date, *r));
            }
        }
        cells.insert(cell_id, raw);
    }
    csvio::write_grid_dir(&out_dir.join("grid"), &cells)?;

    let cell_rows: Vec<(String, String, f64)> =
        (0..spec.n_provinces).map(|p| (format!("j{p:02}"), format!("c{p:02}"), 1.0)).collect();
    let year_from = *spec.years().start();
    let population_rows: Vec<(String, String, i32, i32, f64)> = provinces
        .iter()
        .enumerate()
        .map(|(p, prov)| (prov.clone(), format!("j{p:02}"), year_from, 2100, 1.0))
        .collect();
    csvio::write_weights_dir(&out_dir.join("weights"), &cell_rows, &population_rows)?;

    // Aggregate through the same code path the pipeline uses, so outcomes
    // are generated from exactly the regressors a re-aggregation recovers.
    let mut grid_set = GridSet::new();
    for (id, raw) in &cells {
        grid_set.insert(GridHourlySeries::new(
            id.clone(),
            raw.lat,
            raw.lon,
            raw.hours.clone(),
            raw.days.clone(),
        )?);
    }
    let mut cell_weight_map: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (polygon, cell, w) in &cell_rows {
        cell_weight_map.entry(polygon.clone()).or_default().push((cell.clone(), *w));
    }
    let mut population_map: BTreeMap<String, Vec<PopulationWeight>> = BTreeMap::new();
    for (province, polygon, from, to, w) in &population_rows {
        population_map.entry(province.clone()).or_default().push(PopulationWeight {
            polygon_id: polygon.clone(),
            year_from: *from,
            year_to: *to,
            w_jp: *w,
        });
    }
    let weight_map = WeightMap::new(cell_weight_map, population_map)?;

    // Province means of the DGP regressors keep outcomes at growth-rate
    // scale; the shift is constant per province, so it lands in the
    // province effect without touching the slopes.
    let mut regressors: BTreeMap<(usize, i32), AnnualRegressorSet> = BTreeMap::new();
    for (p, province) in provinces.iter().enumerate() {
        for year in spec.years() {
            regressors.insert(
                (p, year),
                annual_regressor_set(province, year, &reg_config, &grid_set, &weight_map)?,
            );
        }
    }
    let noise_half_width = spec.noise_sd * 3.0_f64.sqrt();
    let level_of: Vec<f64> = provinces.iter().map(|_| rng.gen_range(40.0..160.0)).collect();
    let mut level_sorted = level_of.clone();
    level_sorted.sort_by(|a, b| a.total_cmp(b));
    let low_cut = level_sorted[(spec.n_provinces - 1) / 2];

    let n_regions = (spec.n_provinces.div_ceil(3)).clamp(2, 7);
    let region_of = |p: usize| format!("region{}", p % n_regions + 1);

    let mut panel_rows: Vec<PanelOutRow> = Vec::new();
    for (p, _province) in provinces.iter().enumerate() {
        let mean1 = mean_over_years(&regressors, p, spec, |r| r.poly_terms[0]);
        let mean2 = mean_over_years(&regressors, p, spec, |r| r.poly_terms[1]);
        let mean_r = mean_over_years(&regressors, p, spec, |r| r.precip_linear);
        for (t, year) in spec.years().enumerate() {
            let reg = &regressors[&(p, year)];
            let noise = if noise_half_width > 0.0 {
                rng.gen_range(-noise_half_width..=noise_half_width)
            } else {
                0.0
            };
            let g = 3.0
                + spec.beta1 * (reg.poly_terms[0] - mean1)
                + spec.beta2 * (reg.poly_terms[1] - mean2)
                + spec.rho * (reg.precip_linear - mean_r)
                + alpha[p]
                + gamma[t]
                + noise;
            // Candidate day counts come from the same aggregation the
            // pipeline re-runs, so the panel file and a rebuilt panel
            // agree bit for bit.
            let mut candidate_bins: Vec<Vec<f64>> = Vec::with_capacity(candidates.len());
            for c in &candidates {
                candidate_bins.push(annual_bin_days(
                    &provinces[p],
                    year,
                    &c.edges(),
                    &grid_set,
                    &weight_map,
                )?);
            }
            panel_rows.push(PanelOutRow {
                reg: reg.clone(),
                g: Some(g),
                region_id: Some(region_of(p)),
                low_income: Some(level_of[p] <= low_cut),
                income_level: Some(level_of[p]),
                candidate_bins,
            });
        }
    }
    csvio::write_panel_with_candidates(&out_dir.join("panel.csv"), &panel_rows, &candidates)?;

    // Outcomes alone, for exercising the aggregate + merge route.
    write_outcomes(&out_dir.join("outcomes.csv"), &panel_rows)?;

    // Projected climate: per model and scenario, a warming trend on the
    // same daily process. Candidate bins are not part of climate files.
    let climate_dir = out_dir.join("climate");
    for m in 1..=spec.n_models {
        for (rcp, per_year) in [("rcp45", 0.015), ("rcp85", 0.04)] {
            let model_offset = (m as f64 - 1.0) * 0.2;
            let mut rows: Vec<PanelOutRow> = Vec::new();
            for (p, province) in provinces.iter().enumerate() {
                for year in PROJECTION_FIRST_YEAR..=PROJECTION_LAST_YEAR {
                    let warming = model_offset + per_year * (year - PROJECTION_FIRST_YEAR) as f64;
                    let temps = draw_daily_temps(&mut rng, bases[p], year, warming);
                    let precip = draw_daily_precip(&mut rng, days_in_year(year));
                    rows.push(PanelOutRow {
                        reg: regressors_from_days(province, year, &temps, &precip, &reg_config),
                        g: None,
                        region_id: None,
                        low_income: None,
                        income_level: None,
                        candidate_bins: vec![],
                    });
                }
            }
            csvio::write_panel(&climate_dir.join(format!("m{m}_{rcp}.csv")), &rows)?;
        }
    }

    // Growth inputs: observed 2022 levels, country SSP paths, and a noisy
    // pass-through linkage per province.
    let mut growth = GrowthFile::default();
    for (p, province) in provinces.iter().enumerate() {
        growth.level_2022.insert(province.clone(), level_of[p]);
        growth.linkage.insert(
            province.clone(),
            Linkage {
                intercept: rng.gen_range(-0.5..0.5),
                slope: rng.gen_range(0.6..1.1),
            },
        );
    }
    for (kind, rate) in [("ssp3", 0.03), ("ssp5", 0.05)] {
        let mut gdpcap = 10_000.0;
        let mut points = Vec::new();
        let mut year = 2020;
        while year <= 2095 {
            points.push((year, gdpcap));
            gdpcap *= (1.0 + rate) * (1.0 + rate) * (1.0 + rate) * (1.0 + rate) * (1.0 + rate);
            year += 5;
        }
        growth.ssp_points.insert(kind.to_string(), points);
    }
    csvio::write_growth(&out_dir.join("growth.csv"), &growth)?;

    let share_rows: Vec<(String, String, u64)> = provinces
        .iter()
        .enumerate()
        .map(|(p, prov)| (prov.clone(), region_of(p), rng.gen_range(100_000..5_000_000u64)))
        .collect();
    csvio::write_shares(&out_dir.join("shares.csv"), &share_rows)?;
    csvio::write_candidates(&out_dir.join("candidates.csv"), &candidates)?;

    let spec_text = "\
form = polynomial
poly_order = 2
n_lags = 0
interaction = none
fixed_effects = province,year
trends = none
precip_control = matched
lagged_dependent = false
";
    csvio::atomic_write(&out_dir.join("spec.cfg"), spec_text.as_bytes())?;

    // The finest candidate needs a panel long enough to identify one column
    // per degree; smaller fixtures leave the selection stage unwired.
    let candidates_line = if spec.n_provinces >= 4 && spec.n_years >= 20 {
        "candidates = candidates.csv\n"
    } else {
        ""
    };
    let pipeline_text = format!(
        "\
grid = grid
weights = weights
outcomes = outcomes.csv
{candidates_line}climate_dir = climate
growth = growth.csv
shares = shares.csv
spec = spec.cfg
out_dir = out
seed = {seed}
draws = {draws}
split_year = {split_year}
rcp = all
growth_kinds = baseline
bias_correct = false
scope = gdp
",
        seed = spec.seed,
        draws = spec.draws,
        // Holds out roughly the last sixth of the panel, at least one year.
        split_year = 2022 - (spec.n_years / 6).max(1) as i32,
    );
    let pipeline_cfg = out_dir.join("pipeline.cfg");
    csvio::atomic_write(&pipeline_cfg, pipeline_text.as_bytes())?;
    // The generated pipeline config must itself parse.
    PipelineConfig::read(&pipeline_cfg)?;

    Ok(GeneratedFixture {
        pipeline_cfg,
        truth: DgpTruth { beta1: spec.beta1, beta2: spec.beta2, rho: spec.rho },
    })
}

fn mean_over_years(
    regressors: &BTreeMap<(usize, i32), AnnualRegressorSet>,
    p: usize,
    spec: &SyntheticSpec,
    f: impl Fn(&AnnualRegressorSet) -> f64,
) -> f64 {
    let mut acc = Accumulator::new();
    for year in spec.years() {
        acc.add(f(&regressors[&(p, year)]));
    }
    acc.total() / spec.n_years as f64
}

fn write_outcomes(path: &Path, rows: &[PanelOutRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["province_id", "year", "g", "region_id", "low_income", "income_level"])?;
    for row in rows {
        w.write_record([
            row.reg.province_id.as_str(),
            &row.reg.year.to_string(),
            &row.g.expect("panel rows carry outcomes").to_string(),
            row.region_id.as_deref().unwrap_or(""),
            if row.low_income.unwrap_or(false) { "1" } else { "0" },
            &row.income_level.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::config(e.to_string()))?;
    csvio::atomic_write(path, &bytes)
}

/// Reads `outcomes.csv` rows keyed by (province, year).
pub fn read_outcomes(
    path: &Path,
) -> Result<BTreeMap<(String, i32), (f64, String, bool, Option<f64>)>> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let want = ["province_id", "year", "g", "region_id", "low_income", "income_level"];
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != want {
        return Err(CliError::validation(format!(
            "{}:1: header mismatch: expected {want:?}, found {got:?}",
            path.display()
        )));
    }
    let mut out = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record =
            record.map_err(|e| CliError::validation(format!("{}:{line}: {e}", path.display())))?;
        let year: i32 = record[1].trim().parse().map_err(|_| {
            CliError::validation(format!("{}:{line}: year: not an integer", path.display()))
        })?;
        let g: f64 = record[2].trim().parse().map_err(|_| {
            CliError::validation(format!("{}:{line}: g: not a number", path.display()))
        })?;
        let low = match record[4].trim() {
            "0" | "false" => false,
            "1" | "true" => true,
            other => {
                return Err(CliError::validation(format!(
                    "{}:{line}: low_income: bad flag {other:?}",
                    path.display()
                )))
            }
        };
        let income = if record[5].trim().is_empty() {
            None
        } else {
            Some(record[5].trim().parse().map_err(|_| {
                CliError::validation(format!(
                    "{}:{line}: income_level: not a number",
                    path.display()
                ))
            })?)
        };
        if out
            .insert((record[0].to_string(), year), (g, record[3].to_string(), low, income))
            .is_some()
        {
            return Err(CliError::validation(format!(
                "{}:{line}: duplicate (province, year)",
                path.display()
            )));
        }
    }
    Ok(out)
}
