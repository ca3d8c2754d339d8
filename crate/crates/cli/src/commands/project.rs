//! `climpanel project`: fit the specification, bootstrap it, and run the
//! projection ensemble across climate models, emission scenarios, and
//! growth assumptions, streaming rows into a partitioned run store.

use std::collections::BTreeMap;
use std::path::Path;

use climpanel_core::panel::fit;
use climpanel_core::projection::{
    baseline_growth_map, block_bootstrap, climatology_from_panel, run_ensemble,
    ClimateScenarioData, GrowthKind, GrowthScenario, ProjectionOptions, Rcp, BASELINE_WINDOW,
    RECENT_WINDOW,
};

use crate::config::RcpChoice;
use crate::csvio::{self, RunStore};
use crate::error::{CliError, Result};

pub struct ProjectArgs<'a> {
    pub panel: &'a Path,
    pub climate_dir: &'a Path,
    pub growth: &'a Path,
    pub spec: &'a Path,
    pub rcp: RcpChoice,
    pub growth_kinds: &'a [GrowthKind],
    pub draws: usize,
    pub seed: u64,
    pub bias_correct: bool,
    pub regime_switching: bool,
    pub out: &'a Path,
}

/// Outcome counters surfaced to the caller.
pub struct ProjectSummary {
    pub cells: usize,
    pub rows: usize,
    pub failures: Vec<String>,
    pub bootstrap_redraws: usize,
    pub files: Vec<std::path::PathBuf>,
}

/// Splits `m3_rcp45` into model and scenario.
pub fn parse_climate_stem(stem: &str) -> Result<(String, Rcp)> {
    let (model, rcp_raw) = stem.rsplit_once('_').ok_or_else(|| {
        CliError::validation(format!("climate file {stem}: expected <model>_<rcp>.csv"))
    })?;
    let rcp = Rcp::parse(rcp_raw)
        .map_err(|_| CliError::validation(format!("climate file {stem}: unknown scenario {rcp_raw}")))?;
    Ok((model.to_string(), rcp))
}

pub fn run(args: &ProjectArgs) -> Result<ProjectSummary> {
    if args.growth_kinds.is_empty() {
        return Err(CliError::config("no growth kinds requested"));
    }
    let file = csvio::read_panel(args.panel)?;
    let model_spec = crate::config::read_spec(args.spec)?;
    let point = fit(&model_spec, &file.dataset)?;

    let (draw_values, redraws) = if args.draws > 0 {
        let draws =
            block_bootstrap(&file.dataset, &model_spec, &point, args.draws, args.seed)?;
        (draws.draws, draws.redraws)
    } else {
        (Vec::new(), 0)
    };

    // Observed climatologies shared by every scenario.
    let baseline = climatology_from_panel(&file.dataset, BASELINE_WINDOW)?;
    let observed_recent = climatology_from_panel(&file.dataset, RECENT_WINDOW)?;

    let mut entries: Vec<std::path::PathBuf> = std::fs::read_dir(args.climate_dir)
        .map_err(|e| CliError::config(format!("{}: {e}", args.climate_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    entries.sort();
    let mut climates = Vec::new();
    for path in entries {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::validation(format!("{}: bad file name", path.display())))?;
        let (model, rcp) = parse_climate_stem(stem)?;
        if !args.rcp.includes(rcp) {
            continue;
        }
        let (projected, _) = csvio::read_regressors(&path)?;
        climates.push(
            ClimateScenarioData::new(
                model,
                rcp,
                projected,
                baseline.clone(),
                observed_recent.clone(),
            )
            .map_err(|e| CliError::from(e).in_file(&path))?,
        );
    }
    if climates.is_empty() {
        return Err(CliError::validation(format!(
            "{}: no climate files match the requested scenario",
            args.climate_dir.display()
        )));
    }

    let growth_file = csvio::read_growth(args.growth)?;
    let mut growths = Vec::new();
    for kind in args.growth_kinds {
        let scenario = match kind {
            GrowthKind::Baseline => {
                let mut means = baseline_growth_map(&file.dataset)?;
                for (province, g) in &growth_file.baseline_override {
                    means.insert(province.clone(), *g);
                }
                GrowthScenario::baseline(means)
            }
            GrowthKind::Ssp3 | GrowthKind::Ssp5 => GrowthScenario::ssp(
                *kind,
                growth_file.ssp_path(*kind)?,
                growth_file.linkage.clone(),
            )?,
        };
        growths.push(scenario.with_levels(growth_file.level_2022.clone()));
    }

    let income_group: BTreeMap<String, bool> =
        file.dataset.rows().iter().map(|r| (r.province_id.clone(), r.low_income)).collect();
    let options = ProjectionOptions {
        bias_correct: args.bias_correct,
        regime_switching: args.regime_switching,
        ..ProjectionOptions::default()
    };

    let mut store = RunStore::create(args.out)?;
    let log = run_ensemble(
        &point,
        &draw_values,
        &climates,
        &growths,
        &income_group,
        &options,
        &mut |row| store.write(row).map_err(|e| climpanel_core::Error::InvalidData {
            reason: e.to_string(),
        }),
    )?;
    let files = store.finish()?;
    if log.cells == 0 {
        return Err(CliError::Numerical(format!(
            "every ensemble cell failed; first: {}",
            log.failures
                .first()
                .map(|(tag, err)| format!("{tag}: {err}"))
                .unwrap_or_default()
        )));
    }
    Ok(ProjectSummary {
        cells: log.cells,
        rows: log.rows,
        failures: log.failures.iter().map(|(tag, err)| format!("{tag}: {err}")).collect(),
        bootstrap_redraws: redraws,
        files,
    })
}
