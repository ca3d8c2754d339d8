//! Flat key-value configuration files.
//!
//! `spec.cfg` mirrors the model specification one key per field; unknown
//! keys are rejected so typos cannot silently fall back to defaults.
//! `pipeline.cfg` names every input and output of an end-to-end run, with
//! relative paths resolved against the config file's own directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use climpanel_core::panel::{
    FixedEffects, FunctionalForm, IncomeKind, Interaction, ModelSpec, PrecipControl, Trends,
};
use climpanel_core::projection::{GrowthKind, Rcp};
use climpanel_core::weather::RegressorConfig;

use crate::error::{CliError, Result};

/// Parses `key = value` lines; `#` starts a comment, blank lines ignored.
pub fn parse_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::config(format!("{}:{}: expected key = value", path.display(), i + 1))
        })?;
        if out.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
            return Err(CliError::config(format!(
                "{}:{}: duplicate key {}",
                path.display(),
                i + 1,
                key.trim()
            )));
        }
    }
    Ok(out)
}

const SPEC_KEYS: &[&str] = &[
    "form",
    "poly_order",
    "bin_edges",
    "omitted_bin",
    "hdd_threshold",
    "cdd_threshold",
    "income_kind",
    "n_lags",
    "interaction",
    "fixed_effects",
    "trends",
    "precip_control",
    "lagged_dependent",
    "precip_edges",
];

fn parse_edge_list(raw: &str, key: &str) -> Result<Vec<f64>> {
    let edges: std::result::Result<Vec<f64>, _> =
        raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
    edges.map_err(|_| CliError::config(format!("{key}: bad edge list {raw:?}")))
}

/// Builds a model specification from flat pairs. Missing optional keys take
/// the baseline defaults; unknown keys are errors.
pub fn spec_from_pairs(pairs: &BTreeMap<String, String>) -> Result<ModelSpec> {
    for key in pairs.keys() {
        if !SPEC_KEYS.contains(&key.as_str()) {
            return Err(CliError::config(format!("unknown spec key {key}")));
        }
    }
    let get = |key: &str| pairs.get(key).map(String::as_str);
    let form = match get("form").unwrap_or("polynomial") {
        "polynomial" => {
            let order: usize = get("poly_order")
                .unwrap_or("2")
                .parse()
                .map_err(|_| CliError::config("poly_order: not an integer"))?;
            FunctionalForm::Polynomial { order }
        }
        "bins" => {
            let edges = parse_edge_list(
                get("bin_edges").unwrap_or("13,18,23,28,33,38"),
                "bin_edges",
            )?;
            let omitted_bin: usize = get("omitted_bin")
                .unwrap_or("3")
                .parse()
                .map_err(|_| CliError::config("omitted_bin: not an integer"))?;
            FunctionalForm::Bins { edges, omitted_bin }
        }
        "degree_days" => FunctionalForm::DegreeDays {
            hdd_threshold: get("hdd_threshold")
                .unwrap_or("23")
                .parse()
                .map_err(|_| CliError::config("hdd_threshold: not a number"))?,
            cdd_threshold: get("cdd_threshold")
                .unwrap_or("28")
                .parse()
                .map_err(|_| CliError::config("cdd_threshold: not a number"))?,
        },
        "interacted_average" => FunctionalForm::InteractedAverage {
            income: match get("income_kind").unwrap_or("none") {
                "none" => IncomeKind::None,
                "level" => IncomeKind::Level,
                "log" => IncomeKind::Log,
                other => return Err(CliError::config(format!("income_kind: unknown {other}"))),
            },
        },
        other => return Err(CliError::config(format!("form: unknown {other}"))),
    };
    let n_lags: usize = get("n_lags")
        .unwrap_or("0")
        .parse()
        .map_err(|_| CliError::config("n_lags: not an integer"))?;
    let interaction = match get("interaction").unwrap_or("none") {
        "none" => Interaction::None,
        "low_income" => Interaction::LowIncome,
        other => return Err(CliError::config(format!("interaction: unknown {other}"))),
    };
    let mut fixed_effects = FixedEffects::default();
    for token in get("fixed_effects").unwrap_or("province,year").split(',') {
        match token.trim() {
            "province" => fixed_effects.province = true,
            "year" => fixed_effects.year = true,
            "region_year" => fixed_effects.region_year = true,
            "poor_year" => fixed_effects.poor_year = true,
            "none" | "" => {}
            other => return Err(CliError::config(format!("fixed_effects: unknown {other}"))),
        }
    }
    let trends = match get("trends").unwrap_or("none") {
        "none" => Trends::None,
        "quadratic_country" => Trends::QuadraticCountry,
        "quadratic_province" => Trends::QuadraticProvince,
        other => return Err(CliError::config(format!("trends: unknown {other}"))),
    };
    let precip_control = match get("precip_control").unwrap_or("matched") {
        "none" => PrecipControl::None,
        "matched" => PrecipControl::Matched,
        other => return Err(CliError::config(format!("precip_control: unknown {other}"))),
    };
    let lagged_dependent = match get("lagged_dependent").unwrap_or("false") {
        "false" | "0" => false,
        "true" | "1" => true,
        other => return Err(CliError::config(format!("lagged_dependent: bad flag {other}"))),
    };
    let spec = ModelSpec {
        form,
        n_lags,
        interaction,
        fixed_effects,
        trends,
        precip_control,
        lagged_dependent,
    };
    spec.validate()?;
    Ok(spec)
}

/// Inverse of [`spec_from_pairs`]; emits only the keys the form uses.
pub fn spec_to_pairs(spec: &ModelSpec) -> BTreeMap<String, String> {
    let mut pairs = BTreeMap::new();
    match &spec.form {
        FunctionalForm::Polynomial { order } => {
            pairs.insert("form".into(), "polynomial".into());
            pairs.insert("poly_order".into(), order.to_string());
        }
        FunctionalForm::Bins { edges, omitted_bin } => {
            pairs.insert("form".into(), "bins".into());
            let edges: Vec<String> = edges.iter().map(|e| e.to_string()).collect();
            pairs.insert("bin_edges".into(), edges.join(","));
            pairs.insert("omitted_bin".into(), omitted_bin.to_string());
        }
        FunctionalForm::DegreeDays { hdd_threshold, cdd_threshold } => {
            pairs.insert("form".into(), "degree_days".into());
            pairs.insert("hdd_threshold".into(), hdd_threshold.to_string());
            pairs.insert("cdd_threshold".into(), cdd_threshold.to_string());
        }
        FunctionalForm::InteractedAverage { income } => {
            pairs.insert("form".into(), "interacted_average".into());
            pairs.insert(
                "income_kind".into(),
                match income {
                    IncomeKind::None => "none",
                    IncomeKind::Level => "level",
                    IncomeKind::Log => "log",
                }
                .into(),
            );
        }
    }
    pairs.insert("n_lags".into(), spec.n_lags.to_string());
    pairs.insert(
        "interaction".into(),
        match spec.interaction {
            Interaction::None => "none",
            Interaction::LowIncome => "low_income",
        }
        .into(),
    );
    let mut fe = Vec::new();
    if spec.fixed_effects.province {
        fe.push("province");
    }
    if spec.fixed_effects.year {
        fe.push("year");
    }
    if spec.fixed_effects.region_year {
        fe.push("region_year");
    }
    if spec.fixed_effects.poor_year {
        fe.push("poor_year");
    }
    pairs.insert("fixed_effects".into(), if fe.is_empty() { "none".into() } else { fe.join(",") });
    pairs.insert(
        "trends".into(),
        match spec.trends {
            Trends::None => "none",
            Trends::QuadraticCountry => "quadratic_country",
            Trends::QuadraticProvince => "quadratic_province",
        }
        .into(),
    );
    pairs.insert(
        "precip_control".into(),
        match spec.precip_control {
            PrecipControl::None => "none",
            PrecipControl::Matched => "matched",
        }
        .into(),
    );
    pairs.insert("lagged_dependent".into(), spec.lagged_dependent.to_string());
    pairs
}

pub fn read_spec(path: &Path) -> Result<ModelSpec> {
    spec_from_pairs(&parse_kv(path)?)
}

pub fn write_spec(path: &Path, spec: &ModelSpec) -> Result<()> {
    let mut text = String::new();
    for (k, v) in spec_to_pairs(spec) {
        text.push_str(&format!("{k} = {v}\n"));
    }
    crate::csvio::atomic_write(path, text.as_bytes())
}

/// Regressor schema for the aggregation stage: spec keys override the
/// defaults where present, and the polynomial order is widened to cover the
/// fitted form.
pub fn regressor_config_from_pairs(pairs: &BTreeMap<String, String>) -> Result<RegressorConfig> {
    let mut config = RegressorConfig::default();
    if let Some(raw) = pairs.get("poly_order") {
        let order: usize =
            raw.parse().map_err(|_| CliError::config("poly_order: not an integer"))?;
        config.max_order = config.max_order.max(order);
    }
    if let Some(raw) = pairs.get("bin_edges") {
        config.bin_edges = parse_edge_list(raw, "bin_edges")?;
    }
    if let Some(raw) = pairs.get("hdd_threshold") {
        config.hdd_threshold =
            raw.parse().map_err(|_| CliError::config("hdd_threshold: not a number"))?;
    }
    if let Some(raw) = pairs.get("cdd_threshold") {
        config.cdd_threshold =
            raw.parse().map_err(|_| CliError::config("cdd_threshold: not a number"))?;
    }
    if let Some(raw) = pairs.get("precip_edges") {
        config.precip_edges = parse_edge_list(raw, "precip_edges")?;
    }
    Ok(config)
}

/// Which emission scenarios a projection covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcpChoice {
    One(Rcp),
    All,
}

impl RcpChoice {
    pub fn parse(raw: &str) -> Result<Self> {
        if raw == "all" {
            return Ok(RcpChoice::All);
        }
        Ok(RcpChoice::One(Rcp::parse(raw)?))
    }

    pub fn includes(&self, rcp: Rcp) -> bool {
        match self {
            RcpChoice::All => true,
            RcpChoice::One(r) => *r == rcp,
        }
    }
}

/// Fully resolved configuration of an end-to-end pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub grid: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub climate_dir: PathBuf,
    pub growth: PathBuf,
    pub shares: PathBuf,
    pub spec: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub draws: usize,
    pub rcp: RcpChoice,
    pub growth_kinds: Vec<GrowthKind>,
    pub bias_correct: bool,
    pub regime_switching: bool,
    pub scope: String,
    /// Last training year for the candidate cross-validation stage.
    pub split_year: Option<i32>,
}

const PIPELINE_KEYS: &[&str] = &[
    "grid",
    "weights",
    "outcomes",
    "panel",
    "candidates",
    "climate_dir",
    "growth",
    "shares",
    "spec",
    "out_dir",
    "seed",
    "draws",
    "rcp",
    "growth_kinds",
    "bias_correct",
    "regime_switching",
    "scope",
    "split_year",
];

impl PipelineConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let pairs = parse_kv(path)?;
        for key in pairs.keys() {
            if !PIPELINE_KEYS.contains(&key.as_str()) {
                return Err(CliError::config(format!(
                    "{}: unknown pipeline key {key}",
                    path.display()
                )));
            }
        }
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let resolve = |key: &str| -> Option<PathBuf> {
            pairs.get(key).map(|raw| {
                let p = PathBuf::from(raw);
                if p.is_absolute() {
                    p
                } else {
                    base.join(p)
                }
            })
        };
        let require = |key: &str| -> Result<PathBuf> {
            resolve(key).ok_or_else(|| {
                CliError::config(format!("{}: missing required key {key}", path.display()))
            })
        };
        let seed: u64 = pairs
            .get("seed")
            .ok_or_else(|| CliError::config("missing required key seed"))?
            .parse()
            .map_err(|_| CliError::config("seed: not an integer"))?;
        let draws: usize = pairs
            .get("draws")
            .map(|raw| raw.parse())
            .transpose()
            .map_err(|_| CliError::config("draws: not an integer"))?
            .unwrap_or(0);
        let rcp = RcpChoice::parse(pairs.get("rcp").map(String::as_str).unwrap_or("all"))
            .map_err(|_| CliError::config("rcp: expected rcp45, rcp85, or all"))?;
        let mut growth_kinds = Vec::new();
        for token in pairs.get("growth_kinds").map(String::as_str).unwrap_or("baseline").split(',')
        {
            let kind = GrowthKind::parse(token.trim())
                .map_err(|_| CliError::config(format!("growth_kinds: unknown {token}")))?;
            if !growth_kinds.contains(&kind) {
                growth_kinds.push(kind);
            }
        }
        let parse_flag = |key: &str| -> Result<bool> {
            match pairs.get(key).map(String::as_str).unwrap_or("false") {
                "false" | "0" => Ok(false),
                "true" | "1" => Ok(true),
                other => Err(CliError::config(format!("{key}: bad flag {other}"))),
            }
        };
        let config = Self {
            grid: resolve("grid"),
            weights: resolve("weights"),
            outcomes: resolve("outcomes"),
            panel: resolve("panel"),
            candidates: resolve("candidates"),
            climate_dir: require("climate_dir")?,
            growth: require("growth")?,
            shares: require("shares")?,
            spec: require("spec")?,
            out_dir: require("out_dir")?,
            seed,
            draws,
            rcp,
            growth_kinds,
            bias_correct: parse_flag("bias_correct")?,
            regime_switching: parse_flag("regime_switching")?,
            scope: pairs.get("scope").cloned().unwrap_or_else(|| "gdp".to_string()),
            split_year: pairs
                .get("split_year")
                .map(|raw| raw.parse())
                .transpose()
                .map_err(|_| CliError::config("split_year: not a year"))?,
        };
        if config.panel.is_none() && (config.grid.is_none() || config.weights.is_none()) {
            return Err(CliError::config(
                "pipeline needs either panel or grid + weights inputs",
            ));
        }
        Ok(config)
    }

    /// Checks every referenced input path exists. Stage-tags the failure so
    /// the pipeline reports which input is missing.
    pub fn check_paths(&self) -> Result<()> {
        let mut required: Vec<(&str, &PathBuf)> = vec![
            ("climate_dir", &self.climate_dir),
            ("growth", &self.growth),
            ("shares", &self.shares),
            ("spec", &self.spec),
        ];
        for (name, path) in [
            ("grid", &self.grid),
            ("weights", &self.weights),
            ("outcomes", &self.outcomes),
            ("panel", &self.panel),
            ("candidates", &self.candidates),
        ] {
            if let Some(p) = path {
                required.push((name, p));
            }
        }
        for (name, path) in required {
            if !path.exists() {
                return Err(CliError::config(format!(
                    "{name}: path does not exist: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn spec_roundtrips_through_pairs() {
        let specs = [
            ModelSpec::baseline(FunctionalForm::Polynomial { order: 4 }),
            ModelSpec {
                n_lags: 5,
                interaction: Interaction::LowIncome,
                trends: Trends::QuadraticProvince,
                lagged_dependent: true,
                ..ModelSpec::baseline(FunctionalForm::Bins {
                    edges: vec![13.0, 18.0, 23.0, 28.0, 33.0, 38.0],
                    omitted_bin: 3,
                })
            },
            ModelSpec {
                precip_control: PrecipControl::None,
                ..ModelSpec::baseline(FunctionalForm::DegreeDays {
                    hdd_threshold: 23.0,
                    cdd_threshold: 28.0,
                })
            },
            ModelSpec::baseline(FunctionalForm::InteractedAverage { income: IncomeKind::Log }),
        ];
        for spec in specs {
            let pairs = spec_to_pairs(&spec);
            let back = spec_from_pairs(&pairs).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn spec_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "spec.cfg",
            "# baseline quadratic\nform = polynomial\npoly_order = 2\nn_lags = 1\n",
        );
        let spec = read_spec(&path).unwrap();
        assert_eq!(spec.form, FunctionalForm::Polynomial { order: 2 });
        assert_eq!(spec.n_lags, 1);
        assert_eq!(spec.precip_control, PrecipControl::Matched);
        assert!(spec.fixed_effects.province && spec.fixed_effects.year);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(dir.path(), "spec.cfg", "form = polynomial\npoly_ordr = 2\n");
        let err = read_spec(&path).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        assert!(err.to_string().contains("poly_ordr"));
    }

    #[test]
    fn regressor_config_widens_order() {
        let pairs: BTreeMap<String, String> =
            [("poly_order".to_string(), "5".to_string())].into_iter().collect();
        let config = regressor_config_from_pairs(&pairs).unwrap();
        assert_eq!(config.max_order, 5);
        assert_eq!(config.bin_edges, vec![13.0, 18.0, 23.0, 28.0, 33.0, 38.0]);
    }

    #[test]
    fn pipeline_config_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let text = "\
grid = grid
weights = weights
outcomes = outcomes.csv
climate_dir = climate
growth = growth.csv
shares = shares.csv
spec = spec.cfg
out_dir = out
seed = 7
draws = 50
rcp = rcp85
growth_kinds = baseline,ssp3
bias_correct = true
";
        let path = write(dir.path(), "pipeline.cfg", text);
        let config = PipelineConfig::read(&path).unwrap();
        assert_eq!(config.grid.as_deref(), Some(dir.path().join("grid").as_path()));
        assert_eq!(config.seed, 7);
        assert_eq!(config.draws, 50);
        assert_eq!(config.rcp, RcpChoice::One(Rcp::Rcp85));
        assert_eq!(config.growth_kinds, vec![GrowthKind::Baseline, GrowthKind::Ssp3]);
        assert!(config.bias_correct);
        assert!(!config.regime_switching);
        assert_eq!(config.scope, "gdp");
        // Inputs do not exist yet.
        assert!(config.check_paths().is_err());
    }

    #[test]
    fn pipeline_requires_seed_and_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "p.cfg",
            "climate_dir = c\ngrowth = g.csv\nshares = s.csv\nspec = spec.cfg\nout_dir = out\nseed = 1\n",
        );
        // Neither panel nor grid + weights named.
        assert!(PipelineConfig::read(&path).is_err());
        let path = write(
            dir.path(),
            "p2.cfg",
            "panel = panel.csv\nclimate_dir = c\ngrowth = g.csv\nshares = s.csv\nspec = spec.cfg\nout_dir = out\n",
        );
        let err = PipelineConfig::read(&path).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }
}
