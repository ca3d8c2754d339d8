//! `climpanel fit`: estimate a specification on a panel and store the named
//! coefficients, covariance, and fit statistics.

use std::path::Path;

use climpanel_core::panel::{fit, FitResult};

use crate::config;
use crate::csvio::{self, FitDocument};
use crate::error::Result;

pub fn document_from(result: &FitResult) -> FitDocument {
    let k = result.beta.len();
    let mut vcov = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            vcov.push(result.vcov[(i, j)]);
        }
    }
    FitDocument {
        spec: config::spec_to_pairs(&result.spec),
        columns: result.columns.iter().map(|c| c.name.clone()).collect(),
        beta: result.beta.iter().copied().collect(),
        vcov,
        n_obs: result.n_obs,
        r2: result.r2,
        within_r2: result.within_r2,
        cluster_count: result.cluster_count,
    }
}

pub fn run(panel: &Path, spec: &Path, out: &Path) -> Result<FitDocument> {
    let file = csvio::read_panel(panel)?;
    let model = config::read_spec(spec)?;
    let result = fit(&model, &file.dataset)?;
    let doc = document_from(&result);
    csvio::write_fit(out, &doc)?;
    Ok(doc)
}
