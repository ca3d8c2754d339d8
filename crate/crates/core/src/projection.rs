//! Province growth projections 2023–2090 under climate scenarios.
//!
//! Each projected year adds a differential climate effect δ to a
//! no-climate-change growth rate. δ compares the fitted annual weather
//! response under the projected regressors with the response under the
//! province's 2003–2022 climatology; an optional bias correction subtracts
//! the same comparison evaluated on the overlapping 2018–2022 window, a
//! constant per province and model. With- and without-climate output paths
//! compound from a normalized 2022 level of 1, so only their ratio is
//! meaningful. Uncertainty comes from a pairs-cluster (block) bootstrap that
//! resamples whole provinces with replacement and refits; the ensemble
//! crosses climate models, emission scenarios, growth assumptions, and
//! bootstrap draws, streaming rows to a caller-supplied sink.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::panel::{build_design, fit_design, FitResult, ModelSpec, PanelDataset, Regime};
use crate::weather::AnnualRegressorSet;
use crate::{numeric, Error, Result};

/// Observed window defining baseline climatology and baseline growth.
pub const BASELINE_WINDOW: (i32, i32) = (2003, 2022);
/// Overlap window for the bias correction.
pub const RECENT_WINDOW: (i32, i32) = (2018, 2022);
/// Projected horizon.
pub const PROJECTION_WINDOW: (i32, i32) = (2023, 2090);

/// Emission scenario of a climate-model run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rcp {
    Rcp45,
    Rcp85,
}

impl Rcp {
    pub fn as_str(self) -> &'static str {
        match self {
            Rcp::Rcp45 => "rcp45",
            Rcp::Rcp85 => "rcp85",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rcp45" => Ok(Rcp::Rcp45),
            "rcp85" => Ok(Rcp::Rcp85),
            other => Err(Error::InvalidData { reason: format!("unknown rcp {other}") }),
        }
    }
}

/// No-climate-change growth assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GrowthKind {
    Baseline,
    Ssp3,
    Ssp5,
}

impl GrowthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GrowthKind::Baseline => "baseline",
            GrowthKind::Ssp3 => "ssp3",
            GrowthKind::Ssp5 => "ssp5",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(GrowthKind::Baseline),
            "ssp3" => Ok(GrowthKind::Ssp3),
            "ssp5" => Ok(GrowthKind::Ssp5),
            other => Err(Error::InvalidData { reason: format!("unknown growth kind {other}") }),
        }
    }
}

// ---------------------------------------------------------------------------
// Climate scenario data
// ---------------------------------------------------------------------------

/// Regressors for one climate-model run plus the observed baselines they are
/// compared against. The projected series must cover every province over
/// 2018–2090; the 2018–2022 projected average used by the bias correction is
/// computed here once.
#[derive(Debug, Clone)]
pub struct ClimateScenarioData {
    pub model_id: String,
    pub rcp: Rcp,
    projected: BTreeMap<(String, i32), AnnualRegressorSet>,
    baseline: BTreeMap<String, AnnualRegressorSet>,
    observed_recent: BTreeMap<String, AnnualRegressorSet>,
    projected_recent: BTreeMap<String, AnnualRegressorSet>,
}

impl ClimateScenarioData {
    pub fn new(
        model_id: String,
        rcp: Rcp,
        projected: BTreeMap<(String, i32), AnnualRegressorSet>,
        baseline: BTreeMap<String, AnnualRegressorSet>,
        observed_recent: BTreeMap<String, AnnualRegressorSet>,
    ) -> Result<Self> {
        let mut projected_recent = BTreeMap::new();
        for province in baseline.keys() {
            if !observed_recent.contains_key(province) {
                return Err(Error::MissingBaseline {
                    reason: format!("{province}: no observed {}-{} average", RECENT_WINDOW.0, RECENT_WINDOW.1),
                });
            }
            let mut window = Vec::new();
            for year in RECENT_WINDOW.0..=PROJECTION_WINDOW.1 {
                match projected.get(&(province.clone(), year)) {
                    Some(reg) if year <= RECENT_WINDOW.1 => window.push(reg),
                    Some(_) => {}
                    None => {
                        return Err(Error::OutOfRange {
                            year,
                            what: format!("projected regressors for {province} ({model_id})"),
                        })
                    }
                }
            }
            projected_recent.insert(
                province.clone(),
                AnnualRegressorSet::mean_of(province.clone(), RECENT_WINDOW.1, window)?,
            );
        }
        Ok(Self { model_id, rcp, projected, baseline, observed_recent, projected_recent })
    }

    /// Sorted province ids covered by this scenario.
    pub fn provinces(&self) -> Vec<&str> {
        self.baseline.keys().map(String::as_str).collect()
    }

    pub fn projected(&self, province: &str, year: i32) -> Result<&AnnualRegressorSet> {
        self.projected.get(&(province.to_string(), year)).ok_or(Error::OutOfRange {
            year,
            what: format!("projected regressors for {province}"),
        })
    }

    pub fn baseline(&self, province: &str) -> Result<&AnnualRegressorSet> {
        self.baseline.get(province).ok_or_else(|| Error::MissingBaseline {
            reason: format!("{province}: no baseline climatology"),
        })
    }

    pub fn observed_recent(&self, province: &str) -> Result<&AnnualRegressorSet> {
        self.observed_recent.get(province).ok_or_else(|| Error::MissingBaseline {
            reason: format!("{province}: no observed recent average"),
        })
    }

    pub fn projected_recent(&self, province: &str) -> Result<&AnnualRegressorSet> {
        self.projected_recent.get(province).ok_or_else(|| Error::MissingBaseline {
            reason: format!("{province}: no projected recent average"),
        })
    }
}

/// Per-province climatology: the element-wise mean of panel regressors over
/// `window` (inclusive), using whichever years are present.
pub fn climatology_from_panel(
    panel: &PanelDataset,
    window: (i32, i32),
) -> Result<BTreeMap<String, AnnualRegressorSet>> {
    let mut grouped: BTreeMap<&str, Vec<&AnnualRegressorSet>> = BTreeMap::new();
    for row in panel.rows() {
        if (window.0..=window.1).contains(&row.year) {
            grouped.entry(&row.province_id).or_default().push(&row.regressors);
        }
    }
    let mut out = BTreeMap::new();
    for province in panel.provinces() {
        let sets = grouped.get(province).ok_or_else(|| Error::MissingBaseline {
            reason: format!("{province}: no observations in {}-{}", window.0, window.1),
        })?;
        out.insert(
            province.to_string(),
            AnnualRegressorSet::mean_of(province.to_string(), window.1, sets.iter().copied())?,
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Growth scenarios
// ---------------------------------------------------------------------------

/// Observed mean growth over 2003–2022 for one province, in percent.
pub fn baseline_growth(panel: &PanelDataset, province: &str) -> Result<f64> {
    let window: Vec<f64> = panel
        .rows()
        .iter()
        .filter(|r| {
            r.province_id == province && (BASELINE_WINDOW.0..=BASELINE_WINDOW.1).contains(&r.year)
        })
        .map(|r| r.g)
        .collect();
    numeric::mean(window.iter().copied()).ok_or_else(|| Error::MissingBaseline {
        reason: format!(
            "{province}: no growth observations in {}-{}",
            BASELINE_WINDOW.0, BASELINE_WINDOW.1
        ),
    })
}

/// [`baseline_growth`] for every province in the panel.
pub fn baseline_growth_map(panel: &PanelDataset) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for province in panel.provinces() {
        out.insert(province.to_string(), baseline_growth(panel, province)?);
    }
    Ok(out)
}

/// Country GDP-per-capita path at five-year intervals.
#[derive(Debug, Clone)]
pub struct SspPath {
    pub first_year: i32,
    pub gdpcap: Vec<f64>,
}

impl SspPath {
    pub fn new(first_year: i32, gdpcap: Vec<f64>) -> Result<Self> {
        if gdpcap.len() < 2 {
            return Err(Error::InvalidData { reason: "SSP path needs at least two points".into() });
        }
        if gdpcap.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidData { reason: "SSP path must be positive".into() });
        }
        Ok(Self { first_year, gdpcap })
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + 5 * (self.gdpcap.len() as i32 - 1)
    }
}

/// Annualized country growth at `year` as a fraction: within each five-year
/// block the constant rate (GDPcap_{y+5}/GDPcap_y)^{1/5} − 1. The final path
/// year belongs to the last block.
pub fn ssp_annual_growth(path: &SspPath, year: i32) -> Result<f64> {
    if year < path.first_year || year > path.last_year() {
        return Err(Error::OutOfRange { year, what: "SSP path".to_string() });
    }
    let block = (((year - path.first_year) / 5) as usize).min(path.gdpcap.len() - 2);
    let ratio = path.gdpcap[block + 1] / path.gdpcap[block];
    Ok(libm::pow(ratio, 0.2) - 1.0)
}

/// Linear pass-through from country to province growth, in percent units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linkage {
    pub intercept: f64,
    pub slope: f64,
}

/// A no-climate-change growth assumption covering every province.
#[derive(Debug, Clone)]
pub struct GrowthScenario {
    pub kind: GrowthKind,
    baseline: BTreeMap<String, f64>,
    ssp: Option<SspPath>,
    linkage: BTreeMap<String, Linkage>,
    level_2022: BTreeMap<String, f64>,
}

impl GrowthScenario {
    /// Historical-mean growth per province.
    pub fn baseline(means: BTreeMap<String, f64>) -> Self {
        Self {
            kind: GrowthKind::Baseline,
            baseline: means,
            ssp: None,
            linkage: BTreeMap::new(),
            level_2022: BTreeMap::new(),
        }
    }

    /// SSP country path distributed to provinces through the one-year-lag
    /// linkage regression.
    pub fn ssp(kind: GrowthKind, path: SspPath, linkage: BTreeMap<String, Linkage>) -> Result<Self> {
        if kind == GrowthKind::Baseline {
            return Err(Error::InvalidData { reason: "SSP scenario needs an SSP kind".into() });
        }
        Ok(Self { kind, baseline: BTreeMap::new(), ssp: Some(path), linkage, level_2022: BTreeMap::new() })
    }

    /// Attach observed 2022 output-per-capita levels (required for regime
    /// switching, which ranks provinces by absolute level).
    pub fn with_levels(mut self, levels: BTreeMap<String, f64>) -> Self {
        self.level_2022 = levels;
        self
    }

    pub fn level_2022(&self, province: &str) -> Option<f64> {
        self.level_2022.get(province).copied()
    }

    /// Growth in percent for `province` in `year` absent climate change.
    /// SSP provinces respond to the country's previous-year growth.
    pub fn no_climate_growth(&self, province: &str, year: i32) -> Result<f64> {
        match self.kind {
            GrowthKind::Baseline => {
                self.baseline.get(province).copied().ok_or_else(|| Error::MissingBaseline {
                    reason: format!("{province}: no baseline growth"),
                })
            }
            GrowthKind::Ssp3 | GrowthKind::Ssp5 => {
                let path = self.ssp.as_ref().ok_or_else(|| Error::InvalidData {
                    reason: "SSP scenario without a path".into(),
                })?;
                let link = self.linkage.get(province).ok_or_else(|| Error::MissingBaseline {
                    reason: format!("{province}: no SSP linkage"),
                })?;
                let country = 100.0 * ssp_annual_growth(path, year - 1)?;
                Ok(link.intercept + link.slope * country)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Differential effects
// ---------------------------------------------------------------------------

/// δ_py: cumulative difference between the fitted response under projected
/// regressors and under the baseline climatology, summed over the model's
/// lags. Lag years reach back into the projected 2018–2022 values.
pub fn delta(
    fit: &FitResult,
    climate: &ClimateScenarioData,
    province: &str,
    year: i32,
) -> Result<f64> {
    delta_with_values(fit, &fit.values(), climate, province, year, Regime::All)
}

/// [`delta`] evaluated with an explicit coefficient vector and income
/// regime, the bootstrap-draw entry point.
pub fn delta_with_values(
    fit: &FitResult,
    values: &[f64],
    climate: &ClimateScenarioData,
    province: &str,
    year: i32,
    regime: Regime,
) -> Result<f64> {
    let baseline = climate.baseline(province)?;
    let mut acc = numeric::Accumulator::new();
    for lag in 0..=fit.spec.n_lags {
        let projected = climate.projected(province, year - lag as i32)?;
        let h_proj = fit.annual_temperature_response(values, projected, lag, regime)?;
        let h_base = fit.annual_temperature_response(values, baseline, lag, regime)?;
        acc.add(h_proj - h_base);
    }
    Ok(acc.total())
}

/// δ̄_p: the same contrast evaluated on the 2018–2022 overlap, projected
/// versus observed. Subtracted from every projected year when the bias
/// correction is on; constant per province, model, and regime.
pub fn bias_correction(
    fit: &FitResult,
    values: &[f64],
    climate: &ClimateScenarioData,
    province: &str,
    regime: Regime,
) -> Result<f64> {
    let projected = climate.projected_recent(province)?;
    let observed = climate.observed_recent(province)?;
    let mut acc = numeric::Accumulator::new();
    for lag in 0..=fit.spec.n_lags {
        let h_proj = fit.annual_temperature_response(values, projected, lag, regime)?;
        let h_obs = fit.annual_temperature_response(values, observed, lag, regime)?;
        acc.add(h_proj - h_obs);
    }
    Ok(acc.total())
}

// ---------------------------------------------------------------------------
// Path projection
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ProjectionOptions {
    pub bias_correct: bool,
    pub regime_switching: bool,
    /// Rank provinces by the without-climate path instead of the default
    /// with-climate path when switching.
    pub switch_on_without_path: bool,
    pub years: (i32, i32),
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            bias_correct: false,
            regime_switching: false,
            switch_on_without_path: false,
            years: PROJECTION_WINDOW,
        }
    }
}

/// One projected province-year under one ensemble cell. Draw 0 carries the
/// point-estimate coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRun {
    pub province_id: String,
    pub year: i32,
    pub model_id: String,
    pub rcp: Rcp,
    pub growth: GrowthKind,
    pub draw: u32,
    /// Projected growth with climate change, percent.
    pub g_plus: f64,
    /// With-climate over without-climate output per capita, 2022 = 1.
    pub gpp_ratio: f64,
}

fn is_interacted(fit: &FitResult) -> bool {
    fit.columns.iter().any(|c| c.regime != Regime::All && c.kind.is_temperature())
}

/// Projects every province jointly over the option window. Joint projection
/// is required because regime switching compares each province against the
/// cross-province median level each year. Output is ordered by
/// (province, year).
#[allow(clippy::too_many_arguments)]
pub fn project_all(
    fit: &FitResult,
    values: &[f64],
    climate: &ClimateScenarioData,
    growth: &GrowthScenario,
    income_group: &BTreeMap<String, bool>,
    options: &ProjectionOptions,
    draw: u32,
) -> Result<Vec<ProjectionRun>> {
    let provinces: Vec<String> = climate.provinces().iter().map(|p| p.to_string()).collect();
    if provinces.is_empty() {
        return Err(Error::InvalidData { reason: "climate scenario covers no provinces".into() });
    }
    let interacted = is_interacted(fit);
    if options.regime_switching && !interacted {
        return Err(Error::InvalidData {
            reason: "regime switching requires an income-interacted fit".into(),
        });
    }
    // Resolve each province's starting regime and, when switching, its
    // absolute 2022 level.
    let mut regimes: Vec<Regime> = Vec::with_capacity(provinces.len());
    let mut levels_2022: Vec<f64> = Vec::with_capacity(provinces.len());
    for p in &provinces {
        if interacted {
            let low = income_group.get(p).copied().ok_or_else(|| Error::InvalidData {
                reason: format!("{p}: income group required for an interacted fit"),
            })?;
            regimes.push(if low { Regime::Low } else { Regime::High });
        } else {
            regimes.push(Regime::All);
        }
        if options.regime_switching {
            levels_2022.push(growth.level_2022(p).ok_or_else(|| Error::MissingBaseline {
                reason: format!("{p}: 2022 output level required for regime switching"),
            })?);
        } else {
            levels_2022.push(1.0);
        }
    }

    // Bias corrections are constant per province and regime; cache lazily.
    let mut bias: BTreeMap<(usize, u8), f64> = BTreeMap::new();
    let regime_tag = |r: Regime| -> u8 {
        match r {
            Regime::All => 0,
            Regime::Low => 1,
            Regime::High => 2,
        }
    };

    let mut with_level = alloc::vec![1.0_f64; provinces.len()];
    let mut without_level = alloc::vec![1.0_f64; provinces.len()];
    let mut paths: Vec<Vec<ProjectionRun>> = provinces.iter().map(|_| Vec::new()).collect();

    for year in options.years.0..=options.years.1 {
        if options.regime_switching {
            // Rank prior-year absolute levels against the cross-province
            // median; strictly above the median projects with the
            // high-income response.
            let path = if options.switch_on_without_path { &without_level } else { &with_level };
            let mut prior: Vec<f64> =
                path.iter().zip(&levels_2022).map(|(idx, l)| idx * l).collect();
            let median = numeric::median(&mut prior);
            for (i, _) in provinces.iter().enumerate() {
                let level = (if options.switch_on_without_path {
                    without_level[i]
                } else {
                    with_level[i]
                }) * levels_2022[i];
                regimes[i] = if level > median { Regime::High } else { Regime::Low };
            }
        }
        for (i, province) in provinces.iter().enumerate() {
            let regime = regimes[i];
            let g_nc = growth.no_climate_growth(province, year)?;
            let mut d = delta_with_values(fit, values, climate, province, year, regime)?;
            if options.bias_correct {
                let key = (i, regime_tag(regime));
                let correction = match bias.get(&key) {
                    Some(v) => *v,
                    None => {
                        let v = bias_correction(fit, values, climate, province, regime)?;
                        bias.insert(key, v);
                        v
                    }
                };
                d -= correction;
            }
            let g_plus = g_nc + d;
            // Growth at or below −100% floors the level at zero output.
            with_level[i] *= (1.0 + g_plus / 100.0).max(0.0);
            without_level[i] *= (1.0 + g_nc / 100.0).max(0.0);
            let gpp_ratio = if without_level[i] > 0.0 { with_level[i] / without_level[i] } else { 0.0 };
            paths[i].push(ProjectionRun {
                province_id: province.clone(),
                year,
                model_id: climate.model_id.clone(),
                rcp: climate.rcp,
                growth: growth.kind,
                draw,
                g_plus,
                gpp_ratio,
            });
        }
    }
    Ok(paths.into_iter().flatten().collect())
}

/// Single-province convenience wrapper over [`project_all`] (the joint run
/// is still computed when switching is on, since the median couples
/// provinces).
pub fn project_path(
    fit: &FitResult,
    climate: &ClimateScenarioData,
    growth: &GrowthScenario,
    province: &str,
    income_group: &BTreeMap<String, bool>,
    options: &ProjectionOptions,
) -> Result<Vec<ProjectionRun>> {
    let all = project_all(fit, &fit.values(), climate, growth, income_group, options, 0)?;
    let path: Vec<ProjectionRun> =
        all.into_iter().filter(|r| r.province_id == province).collect();
    if path.is_empty() {
        return Err(Error::MissingBaseline { reason: format!("{province}: not in scenario") });
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// Block bootstrap
// ---------------------------------------------------------------------------

/// Coefficient draws from the pairs-cluster bootstrap, aligned with the
/// point fit's column order.
#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    pub draws: Vec<Vec<f64>>,
    /// Resamples discarded for rank deficiency or other fit failures.
    pub redraws: usize,
}

/// Refits `spec` on a province resample and returns coefficients aligned to
/// the point fit's columns by name. Columns that exist only in the resample
/// (per-province trends of relabeled provinces) fall back to the point
/// estimate; they never enter projections.
pub fn refit_resample(
    panel: &PanelDataset,
    spec: &ModelSpec,
    point: &FitResult,
    sampled: &[&str],
) -> Result<Vec<f64>> {
    let resampled = panel.resample_provinces(sampled)?;
    let design = build_design(spec, &resampled)?;
    let refit = fit_design(spec, design)?;
    let by_name: BTreeMap<&str, f64> = refit
        .columns
        .iter()
        .map(|c| c.name.as_str())
        .zip(refit.beta.iter().copied())
        .collect();
    Ok(point
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| by_name.get(c.name.as_str()).copied().unwrap_or(point.beta[j]))
        .collect())
}

/// Draws `n_draws` coefficient vectors by resampling provinces with
/// replacement (duplicates become distinct clusters) and refitting.
/// Deterministic per seed; degenerate resamples are redrawn and counted.
pub fn block_bootstrap(
    panel: &PanelDataset,
    spec: &ModelSpec,
    point: &FitResult,
    n_draws: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    if n_draws == 0 {
        return Err(Error::InvalidData { reason: "n_draws must be at least 1".into() });
    }
    let provinces: Vec<String> = panel.provinces().iter().map(|p| p.to_string()).collect();
    if provinces.len() < 2 {
        return Err(Error::TooFewGroups {
            reason: format!("{} province(s); bootstrap needs at least 2", provinces.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(n_draws);
    let mut redraws = 0usize;
    let attempt_cap = 10 * n_draws + 100;
    let mut attempts = 0usize;
    while draws.len() < n_draws {
        attempts += 1;
        if attempts > attempt_cap {
            return Err(Error::DegenerateClustering {
                reason: format!("{redraws} degenerate resamples; giving up after {attempts} attempts"),
            });
        }
        let sampled: Vec<&str> = (0..provinces.len())
            .map(|_| provinces[rng.gen_range(0..provinces.len())].as_str())
            .collect();
        match refit_resample(panel, spec, point, &sampled) {
            Ok(values) => draws.push(values),
            Err(
                Error::CollinearDesign { .. }
                | Error::DegenerateClustering { .. }
                | Error::TooFewObservations { .. }
                | Error::ConvergenceFailure { .. },
            ) => {
                redraws += 1;
            }
            Err(other) => return Err(other),
        }
    }
    Ok(BootstrapDraws { draws, redraws })
}

// ---------------------------------------------------------------------------
// Ensemble
// ---------------------------------------------------------------------------

/// Bookkeeping from an ensemble run. Failed cells are recorded and skipped
/// rather than aborting the sweep; sink errors abort immediately.
#[derive(Debug, Default)]
pub struct EnsembleLog {
    pub cells: usize,
    pub rows: usize,
    pub failures: Vec<(String, Error)>,
}

/// Crosses climates × growth scenarios × draws (0 = point estimates) and
/// streams every [`ProjectionRun`] to `sink` in a deterministic order:
/// climates and growths as given, draws ascending, then (province, year).
/// Nothing is retained in memory beyond one cell.
pub fn run_ensemble(
    fit: &FitResult,
    draws: &[Vec<f64>],
    climates: &[ClimateScenarioData],
    growths: &[GrowthScenario],
    income_group: &BTreeMap<String, bool>,
    options: &ProjectionOptions,
    sink: &mut dyn FnMut(&ProjectionRun) -> Result<()>,
) -> Result<EnsembleLog> {
    let mut log = EnsembleLog::default();
    let point = fit.values();
    for climate in climates {
        for growth in growths {
            for draw in 0..=draws.len() {
                let values = if draw == 0 { &point } else { &draws[draw - 1] };
                match project_all(fit, values, climate, growth, income_group, options, draw as u32)
                {
                    Ok(rows) => {
                        log.cells += 1;
                        for row in &rows {
                            sink(row)?;
                            log.rows += 1;
                        }
                    }
                    Err(err) => {
                        log.failures.push((
                            format!(
                                "model={} rcp={} growth={} draw={draw}",
                                climate.model_id,
                                climate.rcp.as_str(),
                                growth.kind.as_str()
                            ),
                            err,
                        ));
                    }
                }
            }
        }
    }
    Ok(log)
}

/// Verifies every scenario covers the same provinces; used by the CLI
/// before launching an ensemble.
pub fn check_coverage(climates: &[ClimateScenarioData]) -> Result<()> {
    let mut sets: BTreeSet<Vec<String>> = BTreeSet::new();
    for c in climates {
        sets.insert(c.provinces().iter().map(|p| p.to_string()).collect());
    }
    if sets.len() > 1 {
        return Err(Error::InvalidData {
            reason: "climate scenarios cover different province sets".into(),
        });
    }
    Ok(())
}
