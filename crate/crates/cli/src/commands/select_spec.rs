//! `climpanel select-spec`: score candidate bin layouts by out-of-time and
//! leave-one-province-out RMSE and report the winner.

use std::path::Path;

use climpanel_core::panel::PanelDataset;
use climpanel_core::selection::{self, CandidateBinConfig, CvReport};

use crate::csvio;
use crate::error::{CliError, Result};

pub struct SelectArgs<'a> {
    pub panel: &'a Path,
    pub candidates: &'a Path,
    pub split_year: Option<i32>,
    pub pivot: Option<f64>,
    pub out: &'a Path,
}

pub fn run(args: &SelectArgs) -> Result<CvReport> {
    let file = csvio::read_panel(args.panel)?;
    let wanted = csvio::read_candidates(args.candidates)?;
    let mut pairs: Vec<(CandidateBinConfig, PanelDataset)> = Vec::with_capacity(wanted.len());
    for config in &wanted {
        let store = file
            .candidate_bins
            .iter()
            .find(|(c, _)| c == config)
            .map(|(_, store)| store)
            .ok_or_else(|| {
                CliError::validation(format!(
                    "{}: panel lacks bin columns for candidate {}",
                    args.panel.display(),
                    config.label()
                ))
            })?;
        pairs.push((config.clone(), file.dataset.with_bin_days(store)?));
    }
    let split_year = args.split_year.unwrap_or(selection::DEFAULT_SPLIT_YEAR);
    let pivot = args.pivot.unwrap_or(selection::DEFAULT_PIVOT);
    let report = selection::select(&pairs, split_year, pivot)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lower_edge", "interval", "rmse_oot", "rmse_oos", "skipped_oot_rows", "winner"])?;
    for (i, score) in report.scores.iter().enumerate() {
        w.write_record([
            score.config.lower_edge.to_string(),
            score.config.interval.to_string(),
            score.rmse_oot.to_string(),
            score.rmse_oos.to_string(),
            score.skipped_oot_rows.to_string(),
            usize::from(i == report.winner).to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::config(e.to_string()))?;
    csvio::atomic_write(args.out, &bytes)?;
    Ok(report)
}
