//! Regional and national aggregation of projected output paths.
//!
//! Provinces are combined with fixed population shares applied to
//! normalized (2022 = 1) per-capita levels: the aggregate with/without
//! ratio is the share-weighted sum of with-climate levels over the
//! share-weighted sum of without-climate levels. Shares are fixed at their
//! base-year values, so national output moves only through province-level
//! growth, not through population reallocation. Distributional summaries
//! over an ensemble report type-7 percentiles of the damage ratio and tail
//! probabilities.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::{numeric, Error, Result};

/// Fixed population weights for every province, grouped by region. Shares
/// are formed from integer head counts so they are exact ratios of exact
/// sums; national shares always add to 1 up to one rounding of each
/// division.
#[derive(Debug, Clone)]
pub struct PopulationShares {
    national: BTreeMap<String, f64>,
    region_of: BTreeMap<String, String>,
    regional: BTreeMap<String, BTreeMap<String, f64>>,
}

impl PopulationShares {
    /// Builds shares from `(province, region, population)` head counts.
    pub fn from_populations(rows: &[(String, String, u64)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidData { reason: "no population rows".into() });
        }
        let mut seen = BTreeSet::new();
        let mut total: u64 = 0;
        let mut region_totals: BTreeMap<&str, u64> = BTreeMap::new();
        for (province, region, pop) in rows {
            if !seen.insert(province.as_str()) {
                return Err(Error::InvalidData {
                    reason: format!("duplicate province {province} in population table"),
                });
            }
            if *pop == 0 {
                return Err(Error::InvalidData {
                    reason: format!("{province}: zero population"),
                });
            }
            total = total.checked_add(*pop).ok_or_else(|| Error::InvalidData {
                reason: "population total overflows u64".into(),
            })?;
            *region_totals.entry(region.as_str()).or_insert(0) += *pop;
        }
        let mut national = BTreeMap::new();
        let mut region_of = BTreeMap::new();
        let mut regional: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (province, region, pop) in rows {
            national.insert(province.clone(), *pop as f64 / total as f64);
            region_of.insert(province.clone(), region.clone());
            regional
                .entry(region.clone())
                .or_default()
                .insert(province.clone(), *pop as f64 / region_totals[region.as_str()] as f64);
        }
        Ok(Self { national, region_of, regional })
    }

    pub fn provinces(&self) -> Vec<&str> {
        self.national.keys().map(String::as_str).collect()
    }

    pub fn regions(&self) -> Vec<&str> {
        self.regional.keys().map(String::as_str).collect()
    }

    pub fn region_of(&self, province: &str) -> Option<&str> {
        self.region_of.get(province).map(String::as_str)
    }

    /// National share of `province`.
    pub fn national(&self, province: &str) -> Option<f64> {
        self.national.get(province).copied()
    }

    /// Share of `province` within its own region.
    pub fn regional(&self, region: &str, province: &str) -> Option<f64> {
        self.regional.get(region).and_then(|m| m.get(province).copied())
    }
}

/// Normalized output-per-capita levels for one ensemble cell and year,
/// keyed by province: the with-climate and without-climate paths compounded
/// from 2022 = 1.
#[derive(Debug, Clone, Default)]
pub struct CellLevels {
    pub with_level: BTreeMap<String, f64>,
    pub without_level: BTreeMap<String, f64>,
}

impl CellLevels {
    /// Reconstructs the two level paths for one province from its projected
    /// growth rates and ratios; returns (with, without) level sequences
    /// aligned with the input order. The without path divides the with
    /// path by the ratio, never recompounding, so the product
    /// `without · ratio` reproduces `with` bit for bit.
    pub fn levels_from_path(g_plus: &[f64], gpp_ratio: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if g_plus.len() != gpp_ratio.len() {
            return Err(Error::InvalidData {
                reason: "growth and ratio sequences differ in length".into(),
            });
        }
        let mut with = Vec::with_capacity(g_plus.len());
        let mut without = Vec::with_capacity(g_plus.len());
        let mut level = 1.0_f64;
        for (g, r) in g_plus.iter().zip(gpp_ratio) {
            level *= (1.0 + g / 100.0).max(0.0);
            with.push(level);
            without.push(if *r > 0.0 { level / r } else { 0.0 });
        }
        Ok((with, without))
    }
}

fn weighted_ratio(
    levels: &CellLevels,
    members: &BTreeMap<String, f64>,
    scope: &str,
) -> Result<f64> {
    let mut num = numeric::Accumulator::new();
    let mut den = numeric::Accumulator::new();
    for (province, share) in members {
        let with = levels.with_level.get(province).ok_or_else(|| Error::IncompleteRegion {
            region: scope.to_string(),
            province: province.clone(),
        })?;
        let without = levels.without_level.get(province).ok_or_else(|| {
            Error::IncompleteRegion { region: scope.to_string(), province: province.clone() }
        })?;
        num.add(share * with);
        den.add(share * without);
    }
    let den = den.total();
    if !(den > 0.0) {
        return Err(Error::InvalidData {
            reason: format!("{scope}: aggregate without-climate level is not positive"),
        });
    }
    Ok(num.total() / den)
}

/// Regional with/without ratio: share-weighted regional levels divided.
/// Every member province must be present in `levels`.
pub fn grp_ratio(levels: &CellLevels, shares: &PopulationShares, region: &str) -> Result<f64> {
    let members = shares.regional.get(region).ok_or_else(|| Error::InvalidData {
        reason: format!("unknown region {region}"),
    })?;
    weighted_ratio(levels, members, region)
}

/// National with/without ratio over all provinces.
pub fn gdp_ratio(levels: &CellLevels, shares: &PopulationShares) -> Result<f64> {
    weighted_ratio(levels, &shares.national, "national")
}

/// Population share living in provinces whose with-climate level falls
/// below their without-climate level in this cell.
pub fn share_negatively_affected(levels: &CellLevels, shares: &PopulationShares) -> Result<f64> {
    let mut acc = numeric::Accumulator::new();
    for (province, share) in &shares.national {
        let with = levels.with_level.get(province).ok_or_else(|| Error::IncompleteRegion {
            region: "national".to_string(),
            province: province.clone(),
        })?;
        let without = levels.without_level.get(province).ok_or_else(|| {
            Error::IncompleteRegion { region: "national".to_string(), province: province.clone() }
        })?;
        if with < without {
            acc.add(*share);
        }
    }
    Ok(acc.total())
}

/// Distribution of an aggregate damage ratio across ensemble cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactSummary {
    /// 5th, 50th, and 95th type-7 percentiles of (ratio − 1).
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    /// Fraction of cells with ratio strictly above 1.
    pub probability_positive: f64,
    /// Fraction of cells with ratio at or above 1.
    pub probability_nonnegative: f64,
    /// Median across cells of the population share losing from climate
    /// change; absent when per-cell shares were not supplied.
    pub share_population_negatively_affected: Option<f64>,
    pub n_cells: usize,
}

/// Summarizes ratios across ensemble cells. `negative_shares`, when given,
/// must align with `ratios` cell for cell.
pub fn summarize(ratios: &[f64], negative_shares: Option<&[f64]>) -> Result<ImpactSummary> {
    if ratios.is_empty() {
        return Err(Error::InvalidData { reason: "no cells to summarize".into() });
    }
    if ratios.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidData { reason: "non-finite ratio in summary".into() });
    }
    let mut impacts: Vec<f64> = ratios.iter().map(|r| r - 1.0).collect();
    numeric::sort(&mut impacts);
    let positive = ratios.iter().filter(|r| **r > 1.0).count();
    let nonnegative = ratios.iter().filter(|r| **r >= 1.0).count();
    let share = match negative_shares {
        Some(shares) => {
            if shares.len() != ratios.len() {
                return Err(Error::InvalidData {
                    reason: "negative-share vector does not align with cells".into(),
                });
            }
            let mut s = shares.to_vec();
            Some(numeric::median(&mut s))
        }
        None => None,
    };
    Ok(ImpactSummary {
        p5: numeric::percentile(&impacts, 0.05),
        p50: numeric::percentile(&impacts, 0.50),
        p95: numeric::percentile(&impacts, 0.95),
        probability_positive: positive as f64 / ratios.len() as f64,
        probability_nonnegative: nonnegative as f64 / ratios.len() as f64,
        share_population_negatively_affected: share,
        n_cells: ratios.len(),
    })
}
