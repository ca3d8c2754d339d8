//! `climpanel aggregate`: gridded weather plus weights to an annual
//! regressor panel, optionally merged with observed outcomes and extended
//! with candidate bin columns.

use std::path::Path;

use climpanel_core::selection::CandidateBinConfig;
use climpanel_core::weather::{annual_bin_days, annual_regressor_set};

use crate::config;
use crate::csvio::{self, PanelOutRow};
use crate::error::{CliError, Result};
use crate::synth;

pub struct AggregateArgs<'a> {
    pub grid: &'a Path,
    pub weights: &'a Path,
    pub outcomes: Option<&'a Path>,
    pub candidates: Option<&'a Path>,
    /// Spec file supplying regressor-schema overrides.
    pub config: Option<&'a Path>,
    /// Required when no outcomes file pins the year coverage.
    pub years: Option<(i32, i32)>,
    pub out: &'a Path,
}

pub fn run(args: &AggregateArgs) -> Result<usize> {
    let grids = csvio::read_grid_dir(args.grid)?;
    let weights = csvio::read_weights_dir(args.weights)?;
    let reg_config = match args.config {
        Some(path) => config::regressor_config_from_pairs(&config::parse_kv(path)?)?,
        None => Default::default(),
    };
    let candidates: Vec<CandidateBinConfig> = match args.candidates {
        Some(path) => csvio::read_candidates(path)?,
        None => Vec::new(),
    };
    let outcomes = args.outcomes.map(synth::read_outcomes).transpose()?;

    // The row set is the outcome table when given, otherwise every province
    // in the weight map crossed with the requested years.
    let keys: Vec<(String, i32)> = match (&outcomes, args.years) {
        (Some(map), _) => map.keys().cloned().collect(),
        (None, Some((from, to))) => {
            if from > to {
                return Err(CliError::config(format!("empty year range {from}:{to}")));
            }
            weights
                .provinces()
                .flat_map(|p| (from..=to).map(move |y| (p.clone(), y)))
                .collect()
        }
        (None, None) => {
            return Err(CliError::config(
                "aggregate needs either --outcomes or --years to fix the row set",
            ))
        }
    };

    let candidate_edges: Vec<Vec<f64>> = candidates.iter().map(|c| c.edges()).collect();
    let mut rows = Vec::with_capacity(keys.len());
    for (province, year) in &keys {
        let reg = annual_regressor_set(province, *year, &reg_config, &grids, &weights)?;
        let candidate_bins: Vec<Vec<f64>> = candidate_edges
            .iter()
            .map(|edges| annual_bin_days(province, *year, edges, &grids, &weights))
            .collect::<climpanel_core::Result<_>>()?;
        let (g, region_id, low_income, income_level) = match &outcomes {
            Some(map) => {
                let (g, region, low, income) = map
                    .get(&(province.clone(), *year))
                    .expect("keys were taken from the outcome table");
                (Some(*g), Some(region.clone()), Some(*low), *income)
            }
            None => (None, None, None, None),
        };
        rows.push(PanelOutRow { reg, g, region_id, low_income, income_level, candidate_bins });
    }
    rows.sort_by(|a, b| (&a.reg.province_id, a.reg.year).cmp(&(&b.reg.province_id, b.reg.year)));
    if candidates.is_empty() {
        csvio::write_panel(args.out, &rows)?;
    } else {
        csvio::write_panel_with_candidates(args.out, &rows, &candidates)?;
    }
    Ok(rows.len())
}
