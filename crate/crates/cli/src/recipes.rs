//! Built-in experiment recipes, one per acceptance experiment.

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::{LabError, Result};

pub const RECIPES: &[(&str, &str)] = &[
    (
        "guidance-algebra",
        include_str!("../recipes/guidance-algebra.json"),
    ),
    ("score-oracle", include_str!("../recipes/score-oracle.json")),
    (
        "uncond-baseline",
        include_str!("../recipes/uncond-baseline.json"),
    ),
    (
        "gaussian-exactness",
        include_str!("../recipes/gaussian-exactness.json"),
    ),
    (
        "interpolation",
        include_str!("../recipes/interpolation.json"),
    ),
    (
        "product-target",
        include_str!("../recipes/product-target.json"),
    ),
    ("null-text", include_str!("../recipes/null-text.json")),
    (
        "denoiser-quality",
        include_str!("../recipes/denoiser-quality.json"),
    ),
    (
        "concept-fusion",
        include_str!("../recipes/concept-fusion.json"),
    ),
    (
        "drift-rectification",
        include_str!("../recipes/drift-rectification.json"),
    ),
    ("decoupling", include_str!("../recipes/decoupling.json")),
];

pub fn names() -> Vec<&'static str> {
    RECIPES.iter().map(|(n, _)| *n).collect()
}

pub fn recipe(name: &str) -> Option<ExperimentConfig> {
    RECIPES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ExperimentConfig::from_json(text).expect("built-in recipes parse"))
}

/// A config file path, or the name of a built-in recipe.
pub fn load(spec: &str) -> Result<ExperimentConfig> {
    let path = Path::new(spec);
    if path.is_file() {
        return ExperimentConfig::from_json(&std::fs::read_to_string(path)?);
    }
    recipe(spec).ok_or_else(|| LabError::UnknownRecipe(spec.to_string(), names().join(", ")))
}
