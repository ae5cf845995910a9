//! Configurations shipped with the binary.

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const PRESETS: [(&str, &str); 7] = [
    ("s5a", include_str!("../presets/s5a.json")),
    ("s5b-nb5", include_str!("../presets/s5b-nb5.json")),
    ("s5b-nb10", include_str!("../presets/s5b-nb10.json")),
    ("poisson2d", include_str!("../presets/poisson2d.json")),
    ("example1", include_str!("../presets/example1.json")),
    ("example2", include_str!("../presets/example2.json")),
    ("fullrank", include_str!("../presets/fullrank.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        HarnessError::config(format!(
            "unknown preset `{name}`; available: {}",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    ExperimentConfig::from_json(text, Path::new(&format!("<preset {name}>")))
}
