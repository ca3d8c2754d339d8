//! `climpanel report`: aggregate stored runs to national, regional, or
//! province impacts and summarize their distribution across ensemble
//! cells. Cells pool climate models and bootstrap draws within each
//! (emission scenario, growth assumption) pair.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use climpanel_core::aggregation::{
    gdp_ratio, grp_ratio, share_negatively_affected, summarize, CellLevels, PopulationShares,
};
use climpanel_core::projection::ProjectionRun;

use crate::csvio::{self, PlotRow, SummaryRow};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Gdp,
    Grp,
    Gpp,
}

impl Scope {
    pub fn parse(raw: &str) -> Result<Self> {
        match raw {
            "gdp" => Ok(Scope::Gdp),
            "grp" => Ok(Scope::Grp),
            "gpp" => Ok(Scope::Gpp),
            other => Err(CliError::config(format!("scope: expected gdp, grp, or gpp, got {other}"))),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Scope::Gdp => "gdp",
            Scope::Grp => "grp",
            Scope::Gpp => "gpp",
        }
    }
}

pub struct ReportArgs<'a> {
    pub runs: &'a Path,
    pub shares: &'a Path,
    pub scope: Scope,
    pub out: &'a Path,
}

/// Cell identity within the ensemble: model and draw vary within a
/// scenario, scenario labels the reported distribution.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    scenario: String,
    model: String,
    draw: u32,
}

fn scenario_of(run: &ProjectionRun) -> String {
    format!("{}_{}", run.rcp.as_str(), run.growth.as_str())
}

/// Normalized with/without levels per (cell, year, province), rebuilt from
/// the stored growth and ratio sequences.
fn rebuild_levels(
    runs: &[ProjectionRun],
) -> Result<BTreeMap<CellKey, BTreeMap<i32, CellLevels>>> {
    let mut series: BTreeMap<(CellKey, String), Vec<(i32, f64, f64)>> = BTreeMap::new();
    for run in runs {
        let key = CellKey {
            scenario: scenario_of(run),
            model: run.model_id.clone(),
            draw: run.draw,
        };
        series
            .entry((key, run.province_id.clone()))
            .or_default()
            .push((run.year, run.g_plus, run.gpp_ratio));
    }
    let mut out: BTreeMap<CellKey, BTreeMap<i32, CellLevels>> = BTreeMap::new();
    for ((key, province), mut rows) in series {
        rows.sort_unstable_by_key(|(year, _, _)| *year);
        if rows.windows(2).any(|w| w[1].0 != w[0].0 + 1) {
            return Err(CliError::validation(format!(
                "{province}: projected years are not consecutive in cell {key:?}"
            )));
        }
        let g_plus: Vec<f64> = rows.iter().map(|(_, g, _)| *g).collect();
        let ratios: Vec<f64> = rows.iter().map(|(_, _, r)| *r).collect();
        let (with, without) = CellLevels::levels_from_path(&g_plus, &ratios)?;
        let years = out.entry(key).or_default();
        for (i, (year, _, _)) in rows.iter().enumerate() {
            let cell = years.entry(*year).or_default();
            cell.with_level.insert(province.clone(), with[i]);
            cell.without_level.insert(province.clone(), without[i]);
        }
    }
    Ok(out)
}

pub fn run(args: &ReportArgs) -> Result<Vec<SummaryRow>> {
    let runs = csvio::read_runs_dir(args.runs)?;
    let shares = PopulationShares::from_populations(&csvio::read_shares(args.shares)?)?;
    let by_cell = rebuild_levels(&runs)?;

    // ratios[(scope_id, scenario, year)] across cells, with the matching
    // per-cell losing-population shares for the national scope.
    let mut ratios: BTreeMap<(String, String, i32), Vec<f64>> = BTreeMap::new();
    let mut negative: BTreeMap<(String, String, i32), Vec<f64>> = BTreeMap::new();
    for (key, years) in &by_cell {
        for (year, cell) in years {
            match args.scope {
                Scope::Gdp => {
                    let slot = ("national".to_string(), key.scenario.clone(), *year);
                    ratios.entry(slot.clone()).or_default().push(gdp_ratio(cell, &shares)?);
                    negative
                        .entry(slot)
                        .or_default()
                        .push(share_negatively_affected(cell, &shares)?);
                }
                Scope::Grp => {
                    for region in shares.regions() {
                        ratios
                            .entry((region.to_string(), key.scenario.clone(), *year))
                            .or_default()
                            .push(grp_ratio(cell, &shares, region)?);
                    }
                }
                Scope::Gpp => {
                    for (province, with) in &cell.with_level {
                        let without = cell.without_level[province];
                        let ratio = if without > 0.0 { with / without } else { 0.0 };
                        ratios
                            .entry((province.clone(), key.scenario.clone(), *year))
                            .or_default()
                            .push(ratio);
                    }
                }
            }
        }
    }

    let mut summary_rows = Vec::with_capacity(ratios.len());
    let mut plot_rows = Vec::with_capacity(ratios.len());
    for ((scope_id, scenario, year), cells) in &ratios {
        let shares_neg = negative.get(&(scope_id.clone(), scenario.clone(), *year));
        let s = summarize(cells, shares_neg.map(Vec::as_slice))?;
        summary_rows.push(SummaryRow {
            scope: args.scope.as_str().to_string(),
            scope_id: scope_id.clone(),
            scenario: scenario.clone(),
            year: *year,
            p5: s.p5,
            p50: s.p50,
            p95: s.p95,
            probability_positive: s.probability_positive,
            probability_nonnegative: s.probability_nonnegative,
            share_population_negatively_affected: s
                .share_population_negatively_affected
                .map(|v| v.to_string())
                .unwrap_or_default(),
            n_cells: s.n_cells,
        });
        plot_rows.push(PlotRow {
            year: *year,
            median: s.p50,
            p5: s.p5,
            p95: s.p95,
            scenario: if args.scope == Scope::Gdp {
                scenario.clone()
            } else {
                format!("{scope_id}:{scenario}")
            },
        });
    }
    csvio::write_summary(args.out, &summary_rows)?;
    csvio::write_plot(&plot_path(args.out), &plot_rows)?;
    Ok(summary_rows)
}

/// `summary.csv` gets a `summary_plot.csv` sibling.
pub fn plot_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("summary");
    out.with_file_name(format!("{stem}_plot.csv"))
}
