use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of a synthetic multi-camera session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub people: usize,
    /// Partition of `0..people`; empty means everyone in one group.
    pub groups: Vec<Vec<usize>>,
    pub frames: usize,
    pub fps: f64,
    /// Standard deviation of each head-position axis, in pixels.
    pub motion_amplitude: f64,
    /// Cutoff of the head-motion low-pass, in Hz.
    pub motion_bandwidth: f64,
    /// Head diameter in pixels.
    pub head_size: f64,
    /// Standard deviation of the per-frame motion noise on observed heads,
    /// in pixels.
    pub noise_sigma: f64,
    pub distractors: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            people: 2,
            groups: Vec::new(),
            frames: 360,
            fps: 60.0,
            motion_amplitude: 6.0,
            motion_bandwidth: 2.0,
            head_size: 60.0,
            noise_sigma: 0.0,
            distractors: 2,
            width: 320,
            height: 180,
        }
    }
}

impl SynthSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Explicit partition, with the one-group default filled in.
    pub fn resolved_groups(&self) -> Vec<Vec<usize>> {
        if self.groups.is_empty() {
            vec![(0..self.people).collect()]
        } else {
            self.groups.clone()
        }
    }

    /// Group index of every person.
    pub fn group_labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.people];
        for (g, members) in self.resolved_groups().iter().enumerate() {
            for &m in members {
                if m < self.people {
                    labels[m] = g;
                }
            }
        }
        labels
    }

    pub fn validate(&self, min_length: usize) -> Result<()> {
        let fail = |m: String| Err(Error::SynthSpec(m));
        if self.people < 2 {
            return fail(format!("need at least 2 people, got {}", self.people));
        }
        if self.frames < min_length + 8 {
            return fail(format!(
                "need at least {} frames for minimum length {min_length}, got {}",
                min_length + 8,
                self.frames
            ));
        }
        let mut seen = vec![false; self.people];
        for g in self.resolved_groups() {
            if g.is_empty() {
                return fail("empty group".into());
            }
            for m in g {
                if m >= self.people {
                    return fail(format!("group member {m} out of range"));
                }
                if seen[m] {
                    return fail(format!("person {m} is in more than one group"));
                }
                seen[m] = true;
            }
        }
        if let Some(m) = seen.iter().position(|s| !s) {
            return fail(format!("person {m} belongs to no group"));
        }
        let positive = [
            ("fps", self.fps),
            ("motion_bandwidth", self.motion_bandwidth),
            ("head_size", self.head_size),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive"));
            }
        }
        if !(self.motion_amplitude >= 0.0) || !(self.noise_sigma >= 0.0) {
            return fail("amplitudes must be non-negative".into());
        }
        if self.width < 32 || self.height < 32 {
            return fail("frames must be at least 32x32".into());
        }
        Ok(())
    }
}
