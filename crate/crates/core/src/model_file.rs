//! Triplet description files.
//!
//! A model is a JSON object with fields `gamma`, `sigma2`, `q` and `jumps`,
//! where `jumps` is either `{"atoms": [[u, mass], ...]}` or
//! `{"density": {"family": "exp_tilted_stable" | "custom_table", "params": {...}}}`.
//! Parse errors cite the offending field path.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::levy::{DensityFamily, JumpAtom, JumpMeasure, LevyTriplet};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    gamma: f64,
    sigma2: f64,
    #[serde(default)]
    q: f64,
    #[serde(default)]
    jumps: Option<JumpsRepr>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JumpsRepr {
    #[serde(default)]
    atoms: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    density: Option<DensityRepr>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityRepr {
    family: String,
    params: serde_json::Value,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpTiltedStableParams {
    alpha: f64,
    scale: f64,
    #[serde(default)]
    tilt: f64,
    #[serde(default)]
    cut: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomTableParams {
    knots: Vec<(f64, f64)>,
}

/// Parses a triplet description from JSON text. `origin` names the source in
/// error messages (a file path, or `"<inline>"`).
pub fn parse_model(text: &str, origin: &str) -> Result<LevyTriplet> {
    let mut de = serde_json::Deserializer::from_str(text);
    let repr: ModelRepr =
        serde_path_to_error::deserialize(&mut de).map_err(|e| Error::ModelFile {
            path: origin.to_string(),
            message: format!("field `{}`: {}", e.path(), e.inner()),
        })?;
    let jump_measure = match repr.jumps {
        None => JumpMeasure::empty(),
        Some(jumps) => match (jumps.atoms, jumps.density) {
            (Some(atoms), None) => JumpMeasure::Atoms(
                atoms
                    .into_iter()
                    .map(|(location, mass)| JumpAtom { location, mass })
                    .collect(),
            ),
            (None, Some(density)) => JumpMeasure::Density(parse_density(density, origin)?),
            (None, None) => JumpMeasure::empty(),
            (Some(_), Some(_)) => {
                return Err(Error::ModelFile {
                    path: origin.to_string(),
                    message: "field `jumps`: specify either `atoms` or `density`, not both"
                        .to_string(),
                })
            }
        },
    };
    Ok(LevyTriplet::new(
        repr.gamma,
        repr.sigma2,
        jump_measure,
        repr.q,
    ))
}

fn parse_density(repr: DensityRepr, origin: &str) -> Result<DensityFamily> {
    let field_err = |e: serde_path_to_error::Error<serde_json::Error>| Error::ModelFile {
        path: origin.to_string(),
        message: format!("field `jumps.density.params.{}`: {}", e.path(), e.inner()),
    };
    match repr.family.as_str() {
        "exp_tilted_stable" => {
            let p: ExpTiltedStableParams =
                serde_path_to_error::deserialize(repr.params).map_err(field_err)?;
            Ok(DensityFamily::ExpTiltedStable {
                alpha: p.alpha,
                scale: p.scale,
                tilt: p.tilt,
                cut: p.cut,
            })
        }
        "custom_table" => {
            let p: CustomTableParams =
                serde_path_to_error::deserialize(repr.params).map_err(field_err)?;
            Ok(DensityFamily::CustomTable { knots: p.knots })
        }
        other => Err(Error::ModelFile {
            path: origin.to_string(),
            message: format!(
                "field `jumps.density.family`: unknown family `{other}` \
                 (expected `exp_tilted_stable` or `custom_table`)"
            ),
        }),
    }
}

/// Reads and parses a triplet description file.
pub fn load_model(path: &Path) -> Result<LevyTriplet> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text, &path.display().to_string())
}

/// Canonical JSON rendering, usable as digest input and for writing model files.
pub fn model_to_json(triplet: &LevyTriplet) -> String {
    let jumps = match &triplet.jump_measure {
        JumpMeasure::Atoms(atoms) => {
            let pairs: Vec<serde_json::Value> = atoms
                .iter()
                .map(|a| serde_json::json!([a.location, a.mass]))
                .collect();
            serde_json::json!({ "atoms": pairs })
        }
        JumpMeasure::Density(DensityFamily::ExpTiltedStable {
            alpha,
            scale,
            tilt,
            cut,
        }) => serde_json::json!({
            "density": {
                "family": "exp_tilted_stable",
                "params": { "alpha": alpha, "scale": scale, "tilt": tilt, "cut": cut },
            }
        }),
        JumpMeasure::Density(DensityFamily::CustomTable { knots }) => serde_json::json!({
            "density": { "family": "custom_table", "params": { "knots": knots } }
        }),
    };
    serde_json::json!({
        "gamma": triplet.gamma,
        "sigma2": triplet.sigma2,
        "q": triplet.kill_rate,
        "jumps": jumps,
    })
    .to_string()
}
