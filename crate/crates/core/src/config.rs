//! Pipeline parameters and the flat `key = value` config format.
//!
//! Every key is optional in a config file; anything left out keeps its
//! default. The trajectory radius used for pixel maps is not a key: it is
//! always twice the sampling step.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Shared parameter set. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub process_width: usize,
    pub process_height: usize,
    /// Grid step for trajectory seeding, in pixels.
    pub sample_step: usize,
    /// Minimum structure-tensor eigenvalue for a trackable point.
    pub gftt_min_eigenvalue: f64,
    /// Frames between seeding passes.
    pub resample_interval: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// Number of constant pieces in a motion sketch.
    pub pieces: usize,
    /// Percentage of candidates that receive an exact correlation.
    pub top_percent: f64,
    pub median_window: usize,
    pub ransac_threshold: f64,
    pub ransac_iterations: usize,
    pub mask_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            process_width: 320,
            process_height: 180,
            sample_step: 4,
            gftt_min_eigenvalue: 1e-4,
            resample_interval: 4,
            min_length: 64,
            max_length: 1024,
            pieces: 64,
            top_percent: 25.0,
            median_window: 5,
            ransac_threshold: 1.0,
            ransac_iterations: 500,
            mask_threshold: 0.5,
        }
    }
}

const KEYS: &[&str] = &[
    "process_width",
    "process_height",
    "sample_step_e_w",
    "gftt_min_eigenvalue",
    "resample_interval",
    "l_min",
    "l_max",
    "paa_pieces_k",
    "top_percent_p",
    "median_window",
    "ransac_threshold",
    "ransac_iterations",
    "mask_threshold",
];

impl PipelineConfig {
    /// Nearest-neighbor radius for targetness maps.
    pub fn radius(&self) -> f64 {
        2.0 * self.sample_step as f64
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigParse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            config
                .set(key.trim(), value.trim())
                .map_err(|message| Error::ConfigParse { line, message })?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies a `key=value` override, as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("override `{assignment}` is not key=value"))
        })?;
        self.set(key.trim(), value.trim())
            .map_err(Error::InvalidArgument)?;
        self.validate()
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn int(key: &str, value: &str) -> std::result::Result<usize, String> {
            value
                .parse()
                .map_err(|_| format!("`{key}` expects a non-negative integer, got `{value}`"))
        }
        fn real(key: &str, value: &str) -> std::result::Result<f64, String> {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("`{key}` expects a number, got `{value}`"))
        }
        match key {
            "process_width" => self.process_width = int(key, value)?,
            "process_height" => self.process_height = int(key, value)?,
            "sample_step_e_w" => self.sample_step = int(key, value)?,
            "gftt_min_eigenvalue" => self.gftt_min_eigenvalue = real(key, value)?,
            "resample_interval" => self.resample_interval = int(key, value)?,
            "l_min" => self.min_length = int(key, value)?,
            "l_max" => self.max_length = int(key, value)?,
            "paa_pieces_k" => self.pieces = int(key, value)?,
            "top_percent_p" => self.top_percent = real(key, value)?,
            "median_window" => self.median_window = int(key, value)?,
            "ransac_threshold" => self.ransac_threshold = real(key, value)?,
            "ransac_iterations" => self.ransac_iterations = int(key, value)?,
            "mask_threshold" => self.mask_threshold = real(key, value)?,
            "radius_r" => return Err("`radius_r` is derived (2 * sample_step_e_w)".into()),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::ConfigInvariant(msg.to_string()));
        if self.min_length > self.max_length {
            return fail("l_min > l_max");
        }
        if !(self.top_percent > 0.0 && self.top_percent <= 100.0) {
            return fail("top_percent_p must lie in (0, 100]");
        }
        if self.pieces == 0 {
            return fail("paa_pieces_k must be at least 1");
        }
        if self.sample_step == 0 {
            return fail("sample_step_e_w must be at least 1");
        }
        if self.resample_interval == 0 {
            return fail("resample_interval must be at least 1");
        }
        if self.min_length < 2 {
            return fail("l_min must be at least 2");
        }
        if self.process_width < 8 || self.process_height < 8 {
            return fail("processing resolution must be at least 8x8");
        }
        if self.median_window.is_multiple_of(2) {
            return fail("median_window must be odd");
        }
        if !(0.0..=1.0).contains(&self.mask_threshold) {
            return fail("mask_threshold must lie in [0, 1]");
        }
        if self.ransac_threshold <= 0.0 || self.ransac_iterations == 0 {
            return fail("ransac_threshold and ransac_iterations must be positive");
        }
        Ok(())
    }

    /// Renders the config in the same text format `parse` reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let values: [String; 13] = [
            self.process_width.to_string(),
            self.process_height.to_string(),
            self.sample_step.to_string(),
            format!("{:e}", self.gftt_min_eigenvalue),
            self.resample_interval.to_string(),
            self.min_length.to_string(),
            self.max_length.to_string(),
            self.pieces.to_string(),
            self.top_percent.to_string(),
            self.median_window.to_string(),
            self.ransac_threshold.to_string(),
            self.ransac_iterations.to_string(),
            self.mask_threshold.to_string(),
        ];
        for (key, value) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{key} = {value}");
        }
        let _ = writeln!(out, "# radius_r = {} (derived)", self.radius());
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
