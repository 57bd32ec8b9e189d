//! Model persistence: a versioned JSON document holding everything needed
//! to reconstruct a fitted transport. Weights are stored as parsed, so a
//! save/load round trip is bit-lossless and loaded models evaluate
//! identically to in-process fits.

use crate::error::{Error, Result};
use crate::potential::PiecewiseAffinePotential;
use crate::reference::ReferenceMeasure;
use crate::solver::{FittedTransport, ResolvedConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    d: usize,
    reference: ReferenceMeasure,
    points: Vec<Vec<f64>>,
    h: Vec<f64>,
    residual: f64,
    config: ResolvedConfig,
}

pub fn model_to_json(fitted: &FittedTransport) -> Result<String> {
    let file = ModelFile {
        version: MODEL_VERSION,
        d: fitted.potential.d(),
        reference: fitted.reference,
        points: fitted.potential.points().to_vec(),
        h: fitted.potential.weights().to_vec(),
        residual: fitted.residual,
        config: fitted.config,
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Model(e.to_string()))
}

pub fn model_from_json(json: &str) -> Result<FittedTransport> {
    let file: ModelFile = serde_json::from_str(json).map_err(|e| Error::Model(e.to_string()))?;
    if file.version != MODEL_VERSION {
        return Err(Error::Model(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            file.version
        )));
    }
    if file.reference.d != file.d {
        return Err(Error::Model(format!(
            "model dimension {} disagrees with reference dimension {}",
            file.d, file.reference.d
        )));
    }
    // Stored weights are already gauged; re-centering would perturb bits.
    let potential = PiecewiseAffinePotential::from_gauged(file.points, file.h)
        .map_err(|e| Error::Model(format!("invalid model contents: {e}")))?;
    if potential.d() != file.d {
        return Err(Error::Model(format!(
            "model dimension {} disagrees with point dimension {}",
            file.d,
            potential.d()
        )));
    }
    Ok(FittedTransport {
        potential,
        reference: file.reference,
        residual: file.residual,
        iterations: 0,
        config: file.config,
        quadrature: None,
    })
}

pub fn save_model(fitted: &FittedTransport, path: &Path) -> Result<()> {
    let mut json = model_to_json(fitted)?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FittedTransport> {
    let json = std::fs::read_to_string(path)?;
    model_from_json(&json)
}
