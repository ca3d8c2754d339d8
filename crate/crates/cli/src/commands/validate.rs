//! `climpanel validate`: structural checks over any subset of the input
//! files. Every problem found is reported; nothing is fixed. A non-empty
//! report maps to exit code 2.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use climpanel_core::aggregation::PopulationShares;
use climpanel_core::projection::GrowthKind;
use climpanel_core::selection::DEFAULT_PIVOT;
use climpanel_core::weather::days_in_year;

use crate::commands::project::parse_climate_stem;
use crate::csvio;
use crate::error::Result;
use crate::synth;

/// Day partitions (temperature bins, precipitation bins, candidate bins)
/// must re-sum to the calendar year within this tolerance.
const PARTITION_TOL: f64 = 1e-6;

/// Projections require climate coverage over these years.
const CLIMATE_WINDOW: (i32, i32) = (2018, 2090);

#[derive(Debug, Default)]
pub struct ValidateArgs {
    pub grid: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
    pub climate_dir: Option<PathBuf>,
    pub growth: Option<PathBuf>,
    pub shares: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
}

impl ValidateArgs {
    pub fn is_empty(&self) -> bool {
        self.grid.is_none()
            && self.weights.is_none()
            && self.panel.is_none()
            && self.outcomes.is_none()
            && self.climate_dir.is_none()
            && self.growth.is_none()
            && self.shares.is_none()
            && self.candidates.is_none()
    }
}

/// Runs every applicable check and returns the list of violations, one
/// human-readable line each. Io-level failures (missing files, bad UTF-8)
/// are violations too, not hard errors.
pub fn run(args: &ValidateArgs) -> Result<Vec<String>> {
    let mut violations = Vec::new();
    let mut panel_provinces: BTreeSet<String> = BTreeSet::new();

    if let Some(dir) = &args.grid {
        match csvio::read_grid_dir(dir) {
            Ok(grid) => {
                if grid.is_empty() {
                    violations.push(format!("{}: grid contains no cells", dir.display()));
                }
            }
            Err(e) => violations.push(e.to_string()),
        }
    }

    if let Some(dir) = &args.weights {
        if let Err(e) = csvio::read_weights_dir(dir) {
            violations.push(e.to_string());
        }
    }

    if let Some(path) = &args.panel {
        match csvio::read_panel(path) {
            Ok(file) => {
                check_panel(path, &file, &mut violations);
                panel_provinces =
                    file.dataset.provinces().into_iter().map(str::to_string).collect();
            }
            Err(e) => violations.push(e.to_string()),
        }
    }

    if let Some(path) = &args.outcomes {
        if let Err(e) = synth::read_outcomes(path) {
            violations.push(e.to_string());
        }
    }

    if let Some(dir) = &args.climate_dir {
        check_climate_dir(dir, &panel_provinces, &mut violations);
    }

    if let Some(path) = &args.growth {
        check_growth(path, &mut violations);
    }

    if let Some(path) = &args.shares {
        match csvio::read_shares(path) {
            Ok(rows) => match PopulationShares::from_populations(&rows) {
                Ok(shares) => {
                    let covered: BTreeSet<&str> = shares.provinces().into_iter().collect();
                    for p in &panel_provinces {
                        if !covered.contains(p.as_str()) {
                            violations.push(format!(
                                "{}: no population share for panel province {p}",
                                path.display()
                            ));
                        }
                    }
                }
                Err(e) => violations.push(format!("{}: {e}", path.display())),
            },
            Err(e) => violations.push(e.to_string()),
        }
    }

    if let Some(path) = &args.candidates {
        match csvio::read_candidates(path) {
            Ok(candidates) => {
                for c in &candidates {
                    if let Err(e) = c.validate(DEFAULT_PIVOT) {
                        violations.push(format!("{}: {e}", path.display()));
                    }
                }
            }
            Err(e) => violations.push(e.to_string()),
        }
    }

    Ok(violations)
}

fn check_partition(label: &str, year: i32, days: &[f64], violations: &mut Vec<String>) {
    let total: f64 = days.iter().sum();
    let expected = f64::from(days_in_year(year));
    if (total - expected).abs() > PARTITION_TOL {
        violations.push(format!(
            "{label}: bin days sum to {total}, expected {expected} for year {year}"
        ));
    }
}

fn check_panel(path: &Path, file: &csvio::PanelFile, violations: &mut Vec<String>) {
    let name = path.display();
    for row in file.dataset.rows() {
        let tag = format!("{name}: {} {}", row.province_id, row.year);
        check_partition(&format!("{tag} temperature"), row.year, &row.regressors.bin_days, violations);
        check_partition(
            &format!("{tag} precipitation"),
            row.year,
            &row.regressors.precip_bin_days,
            violations,
        );
    }
    for (config, store) in &file.candidate_bins {
        for ((province, year), days) in store {
            check_partition(
                &format!("{name}: {province} {year} candidate {}", config.label()),
                *year,
                days,
                violations,
            );
        }
    }
    // Year gaps break lag construction and projection compounding alike.
    let rows = file.dataset.rows();
    for pair in rows.windows(2) {
        if pair[0].province_id == pair[1].province_id && pair[1].year != pair[0].year + 1 {
            violations.push(format!(
                "{name}: {} jumps from {} to {}",
                pair[0].province_id, pair[0].year, pair[1].year
            ));
        }
    }
}

fn check_climate_dir(dir: &Path, panel_provinces: &BTreeSet<String>, violations: &mut Vec<String>) {
    let entries = match std::fs::read_dir(dir) {
        Ok(entries) => entries,
        Err(e) => {
            violations.push(format!("{}: {e}", dir.display()));
            return;
        }
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        violations.push(format!("{}: no climate csv files", dir.display()));
        return;
    }
    for file in files {
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if let Err(e) = parse_climate_stem(stem) {
            violations.push(e.to_string());
            continue;
        }
        let (sets, _) = match csvio::read_regressors(&file) {
            Ok(sets) => sets,
            Err(e) => {
                violations.push(e.to_string());
                continue;
            }
        };
        let mut covered: BTreeSet<String> = BTreeSet::new();
        for (province, _) in sets.keys() {
            covered.insert(province.clone());
        }
        for province in &covered {
            for year in CLIMATE_WINDOW.0..=CLIMATE_WINDOW.1 {
                if !sets.contains_key(&(province.clone(), year)) {
                    violations.push(format!(
                        "{}: {province} missing year {year}",
                        file.display()
                    ));
                }
            }
        }
        for p in panel_provinces {
            if !covered.contains(p) {
                violations.push(format!(
                    "{}: no projection for panel province {p}",
                    file.display()
                ));
            }
        }
    }
}

fn check_growth(path: &Path, violations: &mut Vec<String>) {
    let file = match csvio::read_growth(path) {
        Ok(file) => file,
        Err(e) => {
            violations.push(e.to_string());
            return;
        }
    };
    for key in file.ssp_points.keys() {
        match GrowthKind::parse(key) {
            Ok(kind) => {
                if let Err(e) = file.ssp_path(kind) {
                    violations.push(format!("{}: {e}", path.display()));
                }
            }
            Err(e) => violations.push(format!("{}: {e}", path.display())),
        }
    }
}
