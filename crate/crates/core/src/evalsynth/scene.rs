//! Scenes with ground truth, either generated in memory or read back from a
//! session directory written by [`write_session`].
//!
//! Directory layout:
//!
//! ```text
//! spec.json
//! videos/<id>/frame_NNNNNN.ppm, videos/<id>/manifest.json
//! truth/truth.json
//! truth/<observer>__<target>/mask_NNNNNN.pgm
//! oracle/signals.json
//! ```
//!
//! The pipeline only ever reads `videos/`; `truth/` is read by evaluation
//! and `oracle/` by nothing but tests.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::session::SynthSession;
use super::spec::SynthSpec;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::video_io::{
    read_pgm, write_pgm8, write_ppm, DiskSequence, FrameSource, VideoManifest, DEFAULT_PATTERN,
    MANIFEST_FILE,
};

pub const SPEC_FILE: &str = "spec.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const SIGNALS_FILE: &str = "signals.json";

/// A set of first-person videos with target masks and group labels.
pub trait Scene: Sync {
    fn people(&self) -> usize;
    fn source_id(&self, person: usize) -> String;
    fn video(&self, person: usize) -> Result<Box<dyn FrameSource + '_>>;
    fn size(&self) -> (usize, usize);
    /// People whose heads appear in `observer`'s video.
    fn visible_targets(&self, observer: usize) -> Vec<usize>;
    fn annotated_frames(&self) -> Vec<usize>;
    /// Support of `target` in `observer`'s frame `t`, row-major.
    fn truth_mask(&self, observer: usize, target: usize, t: usize) -> Result<Vec<bool>>;
    fn group_labels(&self) -> Vec<usize>;
    /// The generating spec, when known.
    fn spec(&self) -> Option<&SynthSpec>;
}

impl Scene for SynthSession {
    fn people(&self) -> usize {
        self.spec.people
    }
    fn source_id(&self, person: usize) -> String {
        SynthSession::source_id(person)
    }
    fn video(&self, person: usize) -> Result<Box<dyn FrameSource + '_>> {
        Ok(Box::new(SynthSession::video(self, person)))
    }
    fn size(&self) -> (usize, usize) {
        (self.spec.width, self.spec.height)
    }
    fn visible_targets(&self, observer: usize) -> Vec<usize> {
        SynthSession::visible_targets(self, observer)
    }
    fn annotated_frames(&self) -> Vec<usize> {
        SynthSession::annotated_frames(self)
    }
    fn truth_mask(&self, observer: usize, target: usize, t: usize) -> Result<Vec<bool>> {
        SynthSession::truth_mask(self, observer, target, t).ok_or_else(|| {
            Error::InvalidArgument(format!("person {target} is not visible to person {observer}"))
        })
    }
    fn group_labels(&self) -> Vec<usize> {
        self.spec.group_labels()
    }
    fn spec(&self) -> Option<&SynthSpec> {
        Some(&self.spec)
    }
}

/// Evaluation metadata stored under `truth/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthIndex {
    pub ids: Vec<String>,
    pub group_labels: Vec<usize>,
    pub annotated_frames: Vec<usize>,
    /// Visible targets per observer.
    pub visible: Vec<Vec<usize>>,
    pub width: usize,
    pub height: usize,
}

fn mask_dir(root: &Path, observer: &str, target: &str) -> PathBuf {
    root.join("truth").join(format!("{observer}__{target}"))
}

fn mask_name(t: usize) -> String {
    format!("mask_{t:06}.pgm")
}

pub fn video_dir(root: &Path, id: &str) -> PathBuf {
    root.join("videos").join(id)
}

/// Writes every frame, mask and metadata file of a session under `root`.
pub fn write_session(session: &SynthSession, root: &Path) -> Result<()> {
    let spec = &session.spec;
    let (w, h) = (spec.width, spec.height);
    std::fs::create_dir_all(root.join("truth"))?;
    std::fs::create_dir_all(root.join("oracle"))?;
    spec.save(root.join(SPEC_FILE))?;
    let ids: Vec<String> = (0..spec.people).map(SynthSession::source_id).collect();
    for (p, id) in ids.iter().enumerate() {
        let dir = video_dir(root, id);
        std::fs::create_dir_all(&dir)?;
        VideoManifest {
            source_id: id.clone(),
            fps: spec.fps,
            frame_count: spec.frames,
            width: w,
            height: h,
        }
        .write(dir.join(MANIFEST_FILE))?;
        let pattern = crate::video_io::FramePattern::parse(DEFAULT_PATTERN)?;
        (0..spec.frames).into_par_iter().try_for_each(|t| {
            write_ppm(&dir.join(pattern.format(t)), w, h, &session.render_rgb8(p, t))
        })?;
    }
    let annotated = session.annotated_frames();
    let visible: Vec<Vec<usize>> = (0..spec.people).map(|o| session.visible_targets(o)).collect();
    for (o, targets) in visible.iter().enumerate() {
        for &j in targets {
            let dir = mask_dir(root, &ids[o], &ids[j]);
            std::fs::create_dir_all(&dir)?;
            annotated.par_iter().try_for_each(|&t| {
                let mask = session.truth_mask(o, j, t).expect("visible target");
                let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
                write_pgm8(&dir.join(mask_name(t)), w, h, &bytes)
            })?;
        }
    }
    let index = TruthIndex {
        ids,
        group_labels: spec.group_labels(),
        annotated_frames: annotated,
        visible,
        width: w,
        height: h,
    };
    std::fs::write(root.join("truth").join(TRUTH_FILE), serde_json::to_vec_pretty(&index)?)?;
    std::fs::write(
        root.join("oracle").join(SIGNALS_FILE),
        serde_json::to_vec(&session.signals)?,
    )?;
    Ok(())
}

/// A session directory read back from disk.
#[derive(Debug, Clone)]
pub struct DiskScene {
    root: PathBuf,
    index: TruthIndex,
    spec: Option<SynthSpec>,
    videos: Vec<DiskSequence>,
}

impl DiskScene {
    pub fn open(root: &Path, config: &PipelineConfig) -> Result<Self> {
        let truth_path = root.join("truth").join(TRUTH_FILE);
        let index: TruthIndex = serde_json::from_slice(&std::fs::read(&truth_path).map_err(|e| {
            Error::Format {
                path: truth_path.clone(),
                message: e.to_string(),
            }
        })?)?;
        let spec_path = root.join(SPEC_FILE);
        let spec = spec_path.is_file().then(|| SynthSpec::load(&spec_path)).transpose()?;
        let videos = index
            .ids
            .iter()
            .map(|id| DiskSequence::open_default(&video_dir(root, id), config))
            .collect::<Result<Vec<_>>>()?;
        if let Some(v) = videos.iter().find(|v| v.size() != (index.width, index.height)) {
            return Err(Error::DimensionMismatch(format!(
                "video {} is processed at {:?} but masks are {}x{}",
                v.source_id(),
                v.size(),
                index.width,
                index.height
            )));
        }
        Ok(Self {
            root: root.to_path_buf(),
            index,
            spec,
            videos,
        })
    }

    pub fn index(&self) -> &TruthIndex {
        &self.index
    }
}

impl Scene for DiskScene {
    fn people(&self) -> usize {
        self.index.ids.len()
    }
    fn source_id(&self, person: usize) -> String {
        self.index.ids[person].clone()
    }
    fn video(&self, person: usize) -> Result<Box<dyn FrameSource + '_>> {
        Ok(Box::new(&self.videos[person]))
    }
    fn size(&self) -> (usize, usize) {
        (self.index.width, self.index.height)
    }
    fn visible_targets(&self, observer: usize) -> Vec<usize> {
        self.index.visible[observer].clone()
    }
    fn annotated_frames(&self) -> Vec<usize> {
        self.index.annotated_frames.clone()
    }
    fn truth_mask(&self, observer: usize, target: usize, t: usize) -> Result<Vec<bool>> {
        let path = mask_dir(&self.root, &self.index.ids[observer], &self.index.ids[target]).join(mask_name(t));
        let (w, h, values) = read_pgm(&path)?;
        if (w, h) != (self.index.width, self.index.height) {
            return Err(Error::Format {
                path,
                message: format!("mask is {w}x{h}"),
            });
        }
        Ok(values.into_iter().map(|v| v >= 0.5).collect())
    }
    fn group_labels(&self) -> Vec<usize> {
        self.index.group_labels.clone()
    }
    fn spec(&self) -> Option<&SynthSpec> {
        self.spec.as_ref()
    }
}
