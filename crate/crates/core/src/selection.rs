//! Cross-validated choice of the binned temperature specification.
//!
//! Candidates differ in where the omitted (reference) bin sits and how wide
//! the bins are. Each candidate is scored two ways on the same panel: an
//! out-of-time split that trains on the early period and predicts the late
//! period, and a leave-one-province-out k-fold on the training era. Both
//! scores are pooled root-mean-squared errors of out-of-sample growth
//! predictions. Prediction under absent fixed effects uses neutral
//! imputations: an unseen year gets the mean of the estimated year effects
//! and a held-out province gets a zero province effect, both of which vanish
//! under the canonical (mean-zero) normalization of recovered effects.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::panel::{
    build_design, FitResult, FunctionalForm, ModelSpec, PanelDataset,
    RESPONSE_SUPPORT,
};
use crate::{numeric, Error, Result};

/// Temperature the omitted bin must straddle (°C), the sample median.
pub const DEFAULT_PIVOT: f64 = 26.0;

/// Last year of the training era; later years form the out-of-time holdout.
pub const DEFAULT_SPLIT_YEAR: i32 = 2014;

/// OOT ties below this margin fall through to the k-fold score.
pub const TIE_TOLERANCE: f64 = 1e-6;

/// One candidate bin scheme: equally spaced edges of width `interval`
/// anchored so that `[lower_edge, lower_edge + interval)` is a bin, extended
/// across the whole response support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateBinConfig {
    pub lower_edge: f64,
    pub interval: f64,
}

impl CandidateBinConfig {
    pub fn new(lower_edge: f64, interval: f64) -> Result<Self> {
        if !(interval > 0.0) || !lower_edge.is_finite() {
            return Err(Error::InvalidBins {
                reason: format!("bad candidate ({lower_edge}, {interval})"),
            });
        }
        Ok(Self { lower_edge, interval })
    }

    /// All edges `lower_edge + k·interval` strictly inside the open support.
    pub fn edges(&self) -> Vec<f64> {
        let (lo, hi) = RESPONSE_SUPPORT;
        let mut edges = Vec::new();
        // Walk down below the anchor, then collect upward.
        let mut k = 0;
        while self.lower_edge + (k - 1) as f64 * self.interval > lo {
            k -= 1;
        }
        loop {
            let edge = self.lower_edge + k as f64 * self.interval;
            if edge >= hi {
                break;
            }
            if edge > lo {
                edges.push(edge);
            }
            k += 1;
        }
        edges
    }

    /// Index of the omitted bin `[lower_edge, lower_edge + interval)`.
    pub fn omitted_bin(&self) -> usize {
        crate::weather::bin_index(self.lower_edge, &self.edges())
    }

    /// The omitted bin must contain `pivot`.
    pub fn validate(&self, pivot: f64) -> Result<()> {
        if !(self.lower_edge <= pivot && pivot < self.lower_edge + self.interval) {
            return Err(Error::InvalidBins {
                reason: format!(
                    "omitted bin [{}, {}) does not contain pivot {pivot}",
                    self.lower_edge,
                    self.lower_edge + self.interval
                ),
            });
        }
        Ok(())
    }

    /// Baseline two-way FE model with this candidate's bins.
    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec::baseline(FunctionalForm::Bins {
            edges: self.edges(),
            omitted_bin: self.omitted_bin(),
        })
    }

    /// Display label, e.g. `[23,28)`.
    pub fn label(&self) -> String {
        format!("[{},{})", self.lower_edge, self.lower_edge + self.interval)
    }
}

/// How to treat a test row whose province was absent from training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnseenProvince {
    Skip,
    ImputeZero,
}

/// Out-of-sample squared errors of `fit` on `test` rows.
///
/// Predictions are mu + fixed-effect values + x'beta; unseen years take the
/// mean estimated year effect, unseen provinces follow `unseen`.
fn prediction_errors(
    fit: &FitResult,
    spec: &ModelSpec,
    test: &PanelDataset,
    unseen: UnseenProvince,
) -> Result<(f64, usize, usize)> {
    let design = build_design(spec, test)?;
    let fe = &fit.fixed_effects;
    let mut sse = numeric::Accumulator::new();
    let mut n = 0usize;
    let mut skipped = 0usize;
    for (i, (province, year)) in design.row_keys.iter().enumerate() {
        let mut yhat = fe.mu;
        let mut usable = true;
        for (kind, _) in &fe.factors {
            let label = match *kind {
                "province" => province.clone(),
                "year" => year.to_string(),
                other => {
                    // Baseline CV specs carry only province and year effects.
                    return Err(Error::InvalidData {
                        reason: format!("unsupported CV fixed effect {other}"),
                    });
                }
            };
            match (fe.effect(kind, &label), *kind) {
                (Some(v), _) => yhat += v,
                (None, "province") => match unseen {
                    UnseenProvince::Skip => {
                        usable = false;
                        break;
                    }
                    UnseenProvince::ImputeZero => {}
                },
                (None, _) => yhat += fe.mean_effect(kind),
            }
        }
        if !usable {
            skipped += 1;
            continue;
        }
        for (j, _col) in design.columns.iter().enumerate() {
            yhat += design.x[(i, j)] * fit.beta[j];
        }
        let e = design.y[i] - yhat;
        sse.add(e * e);
        n += 1;
    }
    Ok((sse.total(), n, skipped))
}

/// Out-of-time RMSE: train on years ≤ `split_year`, predict strictly later
/// years. Returns the pooled RMSE and the count of skipped test rows whose
/// province never appeared in training.
pub fn oot_rmse(
    candidate: &CandidateBinConfig,
    data: &PanelDataset,
    split_year: i32,
) -> Result<(f64, usize)> {
    let spec = candidate.to_spec();
    let train = data.filter_years(i32::MIN, split_year);
    let test = data.filter_years(split_year + 1, i32::MAX);
    if train.is_empty() || test.is_empty() {
        return Err(Error::TooFewObservations {
            reason: format!("empty period at split {split_year}"),
        });
    }
    let fit = crate::panel::fit(&spec, &train)?;
    let (sse, n, skipped) = prediction_errors(&fit, &spec, &test, UnseenProvince::Skip)?;
    if n == 0 {
        return Err(Error::TooFewObservations {
            reason: "no predictable test rows".into(),
        });
    }
    Ok((libm::sqrt(sse / n as f64), skipped))
}

/// Leave-one-province-out RMSE over the rows of `data` (callers restrict to
/// the training era first). Each fold refits without one province and
/// predicts it with a zero province effect; errors are pooled before the
/// root.
pub fn group_kfold_rmse(candidate: &CandidateBinConfig, data: &PanelDataset) -> Result<f64> {
    let spec = candidate.to_spec();
    let provinces: Vec<String> = data.provinces().iter().map(|p| String::from(*p)).collect();
    if provinces.len() < 2 {
        return Err(Error::TooFewGroups {
            reason: format!("{} province(s); k-fold needs at least 2", provinces.len()),
        });
    }
    let mut sse = numeric::Accumulator::new();
    let mut n = 0usize;
    for held_out in &provinces {
        let train = data.filter_provinces(|p| p != held_out);
        let test = data.filter_provinces(|p| p == held_out);
        let fit = crate::panel::fit(&spec, &train)?;
        let (fold_sse, fold_n, _) =
            prediction_errors(&fit, &spec, &test, UnseenProvince::ImputeZero)?;
        sse.add(fold_sse);
        n += fold_n;
    }
    if n == 0 {
        return Err(Error::TooFewObservations {
            reason: "no predictable k-fold rows".into(),
        });
    }
    Ok(libm::sqrt(sse.total() / n as f64))
}

/// Scores for one candidate.
#[derive(Debug, Clone)]
pub struct CandidateScore {
    pub config: CandidateBinConfig,
    pub rmse_oot: f64,
    pub rmse_oos: f64,
    pub skipped_oot_rows: usize,
}

/// Full cross-validation report; `winner` indexes into `scores`.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub scores: Vec<CandidateScore>,
    pub winner: usize,
}

impl CvReport {
    pub fn winner_config(&self) -> &CandidateBinConfig {
        &self.scores[self.winner].config
    }
}

/// Scores every `(candidate, panel)` pair and picks the winner: minimum OOT
/// RMSE, ties within `TIE_TOLERANCE` broken by the k-fold RMSE, and exact
/// remaining ties by (lower_edge, interval) so candidate order never
/// matters. The k-fold runs on the training era only.
pub fn select(
    candidates: &[(CandidateBinConfig, PanelDataset)],
    split_year: i32,
    pivot: f64,
) -> Result<CvReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidData {
            reason: "no candidates to select from".into(),
        });
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for (config, data) in candidates {
        config.validate(pivot)?;
        let (rmse_oot, skipped) = oot_rmse(config, data, split_year)?;
        let train = data.filter_years(i32::MIN, split_year);
        let rmse_oos = group_kfold_rmse(config, &train)?;
        scores.push(CandidateScore {
            config: *config,
            rmse_oot,
            rmse_oos,
            skipped_oot_rows: skipped,
        });
    }
    let best_oot = scores.iter().map(|s| s.rmse_oot).fold(f64::INFINITY, f64::min);
    let winner = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.rmse_oot <= best_oot + TIE_TOLERANCE)
        .min_by(|(_, a), (_, b)| {
            (a.rmse_oos, a.config.lower_edge, a.config.interval)
                .partial_cmp(&(b.rmse_oos, b.config.lower_edge, b.config.interval))
                .expect("finite RMSE")
        })
        .map(|(i, _)| i)
        .expect("nonempty scores");
    Ok(CvReport { scores, winner })
}
