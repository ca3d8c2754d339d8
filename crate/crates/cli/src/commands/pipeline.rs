//! `climpanel pipeline`: one-command run from raw inputs to the summary
//! table, with a manifest recording versions, seeds, and input digests so
//! a finished output directory is self-describing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::commands::{aggregate, fit, project, report, select_spec};
use crate::config::PipelineConfig;
use crate::csvio::{self, CELL_WEIGHTS_FILE, DAILY_FILE, HOURLY_FILE, POPULATION_WEIGHTS_FILE};
use crate::error::{CliError, Result};

#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    draws: usize,
    /// Input path -> sha256 of its bytes, for provenance and rerun checks.
    inputs: BTreeMap<String, String>,
}

pub struct PipelineReport {
    pub out_dir: PathBuf,
    pub panel_rows: Option<usize>,
    pub cv_winner: Option<String>,
    pub fit_columns: usize,
    pub projection: project::ProjectSummary,
    pub summary_rows: usize,
}

pub fn run(config_path: &Path) -> Result<PipelineReport> {
    let cfg = PipelineConfig::read(config_path).map_err(|e| e.in_stage("config"))?;
    cfg.check_paths().map_err(|e| e.in_stage("config"))?;
    let scope = report::Scope::parse(&cfg.scope).map_err(|e| e.in_stage("config"))?;
    if cfg.grid.is_some() && cfg.outcomes.is_none() {
        return Err(CliError::config(
            "outcomes is required when the panel is built from grid data",
        )
        .in_stage("config"));
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::from(e).in_stage("config"))?;

    let panel_path = match (&cfg.grid, &cfg.weights) {
        (Some(grid), Some(weights)) => {
            let out = cfg.out_dir.join("panel.csv");
            let args = aggregate::AggregateArgs {
                grid,
                weights,
                outcomes: cfg.outcomes.as_deref(),
                candidates: cfg.candidates.as_deref(),
                config: Some(&cfg.spec),
                years: None,
                out: &out,
            };
            let rows = aggregate::run(&args).map_err(|e| e.in_stage("aggregate"))?;
            (out, Some(rows))
        }
        _ => (cfg.panel.clone().expect("config requires panel or grid"), None),
    };

    let fit_doc = fit::run(&panel_path.0, &cfg.spec, &cfg.out_dir.join("fit.json"))
        .map_err(|e| e.in_stage("fit"))?;

    let cv_winner = match &cfg.candidates {
        Some(candidates) => {
            let args = select_spec::SelectArgs {
                panel: &panel_path.0,
                candidates,
                split_year: cfg.split_year,
                pivot: None,
                out: &cfg.out_dir.join("cv.csv"),
            };
            let cv = select_spec::run(&args).map_err(|e| e.in_stage("select-spec"))?;
            Some(cv.winner_config().label())
        }
        None => None,
    };

    let runs_dir = cfg.out_dir.join("runs");
    let projection = project::run(&project::ProjectArgs {
        panel: &panel_path.0,
        climate_dir: &cfg.climate_dir,
        growth: &cfg.growth,
        spec: &cfg.spec,
        rcp: cfg.rcp,
        growth_kinds: &cfg.growth_kinds,
        draws: cfg.draws,
        seed: cfg.seed,
        bias_correct: cfg.bias_correct,
        regime_switching: cfg.regime_switching,
        out: &runs_dir,
    })
    .map_err(|e| e.in_stage("project"))?;

    let summary = report::run(&report::ReportArgs {
        runs: &runs_dir,
        shares: &cfg.shares,
        scope,
        out: &cfg.out_dir.join("summary.csv"),
    })
    .map_err(|e| e.in_stage("report"))?;

    write_manifest(&cfg).map_err(|e| e.in_stage("manifest"))?;

    Ok(PipelineReport {
        out_dir: cfg.out_dir.clone(),
        panel_rows: panel_path.1,
        cv_winner,
        fit_columns: fit_doc.columns.len(),
        projection,
        summary_rows: summary.len(),
    })
}

fn digest_into(inputs: &mut BTreeMap<String, String>, path: &Path) -> Result<()> {
    inputs.insert(path.display().to_string(), csvio::sha256_hex(path)?);
    Ok(())
}

fn write_manifest(cfg: &PipelineConfig) -> Result<()> {
    let mut inputs = BTreeMap::new();
    digest_into(&mut inputs, &cfg.spec)?;
    digest_into(&mut inputs, &cfg.growth)?;
    digest_into(&mut inputs, &cfg.shares)?;
    for optional in [&cfg.candidates, &cfg.outcomes, &cfg.panel] {
        if let Some(path) = optional {
            digest_into(&mut inputs, path)?;
        }
    }
    if let Some(grid) = &cfg.grid {
        digest_into(&mut inputs, &grid.join(HOURLY_FILE))?;
        digest_into(&mut inputs, &grid.join(DAILY_FILE))?;
    }
    if let Some(weights) = &cfg.weights {
        digest_into(&mut inputs, &weights.join(CELL_WEIGHTS_FILE))?;
        digest_into(&mut inputs, &weights.join(POPULATION_WEIGHTS_FILE))?;
    }
    let mut climate_files: Vec<PathBuf> = std::fs::read_dir(&cfg.climate_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    climate_files.sort();
    for file in &climate_files {
        digest_into(&mut inputs, file)?;
    }

    let manifest = Manifest {
        tool: "climpanel",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        draws: cfg.draws,
        inputs,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    csvio::atomic_write(&cfg.out_dir.join("manifest.json"), &bytes)
}
