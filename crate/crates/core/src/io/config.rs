use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::Connectivity;

/// How many surviving components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopK {
    Count(usize),
    All,
}

impl fmt::Display for TopK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopK::Count(k) => write!(f, "{k}"),
            TopK::All => f.write_str("ALL"),
        }
    }
}

impl FromStr for TopK {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(TopK::All);
        }
        s.parse::<usize>().map(TopK::Count).map_err(|e| e.to_string())
    }
}

/// Every tunable of the post-processing pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub threshold_prob: f64,
    pub dilation_radius: usize,
    pub dilation_iterations: usize,
    pub lung_overlap_min: f64,
    pub mediastinal_overlap_min: f64,
    pub surface_distance_max: f64,
    pub min_component_voxels: usize,
    pub top_k: TopK,
    pub roi_margin: usize,
    pub connectivity: Connectivity,
    pub boundary_tolerance_voxels: usize,
    pub alpha_scale: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            threshold_prob: 0.5,
            dilation_radius: 1,
            dilation_iterations: 1,
            lung_overlap_min: 0.80,
            mediastinal_overlap_min: 0.90,
            surface_distance_max: 5.0,
            min_component_voxels: 50,
            top_k: TopK::Count(1),
            roi_margin: 0,
            connectivity: Connectivity::TwentySix,
            boundary_tolerance_voxels: 2,
            alpha_scale: 1.0,
        }
    }
}

pub(crate) const KEYS: &[&str] = &[
    "threshold_prob",
    "dilation_radius",
    "dilation_iterations",
    "lung_overlap_min",
    "mediastinal_overlap_min",
    "surface_distance_max",
    "min_component_voxels",
    "top_k",
    "roi_margin",
    "connectivity",
    "boundary_tolerance_voxels",
    "alpha_scale",
];

fn out_of_range(key: &str, value: impl fmt::Display) -> Error {
    Error::OutOfRange { key: key.to_string(), value: value.to_string() }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| out_of_range(key, value))
}

impl PipelineConfig {
    /// Sets one field from its textual form without cross-field checks.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "threshold_prob" => self.threshold_prob = parse(key, value)?,
            "dilation_radius" => self.dilation_radius = parse(key, value)?,
            "dilation_iterations" => self.dilation_iterations = parse(key, value)?,
            "lung_overlap_min" => self.lung_overlap_min = parse(key, value)?,
            "mediastinal_overlap_min" => self.mediastinal_overlap_min = parse(key, value)?,
            "surface_distance_max" => self.surface_distance_max = parse(key, value)?,
            "min_component_voxels" => self.min_component_voxels = parse(key, value)?,
            "top_k" => self.top_k = parse(key, value)?,
            "roi_margin" => self.roi_margin = parse(key, value)?,
            "connectivity" => {
                let n: u8 = parse(key, value)?;
                self.connectivity = Connectivity::from_neighbors(n).ok_or_else(|| out_of_range(key, value))?;
            }
            "boundary_tolerance_voxels" => self.boundary_tolerance_voxels = parse(key, value)?,
            "alpha_scale" => self.alpha_scale = parse(key, value)?,
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Checks every field range and the mediastinal/lung ordering.
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !(self.threshold_prob > 0.0 && self.threshold_prob < 1.0) {
            return Err(out_of_range("threshold_prob", self.threshold_prob));
        }
        if self.dilation_radius == 0 {
            return Err(out_of_range("dilation_radius", 0));
        }
        if !unit.contains(&self.lung_overlap_min) {
            return Err(out_of_range("lung_overlap_min", self.lung_overlap_min));
        }
        if !unit.contains(&self.mediastinal_overlap_min) || self.mediastinal_overlap_min < self.lung_overlap_min {
            return Err(out_of_range("mediastinal_overlap_min", self.mediastinal_overlap_min));
        }
        if !(self.surface_distance_max >= 0.0 && self.surface_distance_max.is_finite()) {
            return Err(out_of_range("surface_distance_max", self.surface_distance_max));
        }
        if self.min_component_voxels == 0 {
            return Err(out_of_range("min_component_voxels", 0));
        }
        if self.top_k == TopK::Count(0) {
            return Err(out_of_range("top_k", 0));
        }
        if self.boundary_tolerance_voxels == 0 {
            return Err(out_of_range("boundary_tolerance_voxels", 0));
        }
        if !(self.alpha_scale > 0.0 && self.alpha_scale.is_finite()) {
            return Err(out_of_range("alpha_scale", self.alpha_scale));
        }
        Ok(())
    }

    /// Serializes to the `key = value` format read by [`parse_config`].
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            s.push_str(&format!("{key} = {}\n", self.value_of(key).unwrap()));
        }
        s
    }

    /// Textual value of a field, `None` for unknown keys.
    pub fn value_of(&self, key: &str) -> Option<String> {
        Some(match key {
            "threshold_prob" => self.threshold_prob.to_string(),
            "dilation_radius" => self.dilation_radius.to_string(),
            "dilation_iterations" => self.dilation_iterations.to_string(),
            "lung_overlap_min" => self.lung_overlap_min.to_string(),
            "mediastinal_overlap_min" => self.mediastinal_overlap_min.to_string(),
            "surface_distance_max" => self.surface_distance_max.to_string(),
            "min_component_voxels" => self.min_component_voxels.to_string(),
            "top_k" => self.top_k.to_string(),
            "roi_margin" => self.roi_margin.to_string(),
            "connectivity" => self.connectivity.neighbors().to_string(),
            "boundary_tolerance_voxels" => self.boundary_tolerance_voxels.to_string(),
            "alpha_scale" => self.alpha_scale.to_string(),
            _ => return None,
        })
    }

    pub fn is_key(key: &str) -> bool {
        KEYS.contains(&key)
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are ignored;
/// missing keys keep their defaults.
pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::ParseFailure { line: i + 1, text: raw.to_string() })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::ParseFailure { line: i + 1, text: raw.to_string() });
        }
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
