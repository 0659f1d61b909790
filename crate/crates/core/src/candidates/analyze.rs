use std::path::Path;

use rayon::prelude::*;

use super::{Candidate, Tracker};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::motion::{
    dense_flow_prepared, flow_cache_path, frame_homography, mean_displacement,
    pattern_from_transitions, read_flow, write_flow, FlowField, GlobalMotionPattern, PreparedFrame,
};
use crate::video_io::{Frame, FrameSource};

/// Transitions processed per parallel batch; bounds the number of decoded
/// frames and flow fields held at once.
const BATCH: usize = 16;

/// Everything the search needs from one video: its own ego-motion and the
/// candidate trajectories observed in it.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoAnalysis {
    pub source_id: String,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Unfiltered global motion pattern.
    pub global: GlobalMotionPattern,
    pub candidates: Vec<Candidate>,
}

impl VideoAnalysis {
    /// The global pattern as used for search: median filtered.
    pub fn query_pattern(&self, config: &PipelineConfig) -> Result<GlobalMotionPattern> {
        self.global.median_filtered(config.median_window)
    }
}

/// One streaming pass over a video: dense flow, per-frame homography,
/// global motion pattern and candidate trajectories with features.
pub fn analyze_video(video: &dyn FrameSource, config: &PipelineConfig) -> Result<VideoAnalysis> {
    analyze_video_cached(video, config, None)
}

/// Dense flow for one transition, read from `cache` when a matching file
/// exists there and written to it otherwise.
fn cached_flow(prev: &PreparedFrame, next: &PreparedFrame, t: usize, cache: Option<&Path>) -> Result<FlowField> {
    let Some(dir) = cache else {
        return Ok(dense_flow_prepared(prev, next));
    };
    let path = flow_cache_path(dir, t);
    if path.is_file() {
        let (header, flow) = read_flow(&path)?;
        let expected = (prev.width() as u32, prev.height() as u32, t as u32);
        if (header.width, header.height, header.frame_index) == expected {
            return Ok(flow);
        }
    }
    let flow = dense_flow_prepared(prev, next);
    write_flow(&path, t as u32, &flow)?;
    Ok(flow)
}

/// [`analyze_video`] with an optional directory of dense flow caches.
pub fn analyze_video_cached(
    video: &dyn FrameSource,
    config: &PipelineConfig,
    flow_cache: Option<&Path>,
) -> Result<VideoAnalysis> {
    if let Some(dir) = flow_cache {
        std::fs::create_dir_all(dir)?;
    }
    config.validate()?;
    let n = video.frame_count();
    if n < 2 {
        return Err(Error::SequenceTooShort(n));
    }
    let (width, height) = video.size();
    let mut tracker = Tracker::new(config, width, height);
    let mut transitions = Vec::with_capacity(n - 1);
    let first = video.frame(0)?.into_owned();
    let mut carry = (PreparedFrame::new(&first), first);
    let interval = config.resample_interval.max(1);
    let mut start = 0;
    while start < n - 1 {
        let end = (start + BATCH).min(n - 1);
        let loaded: Vec<(PreparedFrame, Frame)> = (start + 1..=end)
            .into_par_iter()
            .map(|t| {
                let frame = video.frame(t)?.into_owned();
                Ok((PreparedFrame::new(&frame), frame))
            })
            .collect::<Result<_>>()?;
        let mut batch = Vec::with_capacity(loaded.len() + 1);
        batch.push(carry);
        batch.extend(loaded);
        let motion: Vec<(FlowField, Option<_>)> = batch
            .par_windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let (prev, next) = (&pair[0].0, &pair[1].0);
                let (flow, homography) = rayon::join(
                    || cached_flow(prev, next, start + i, flow_cache),
                    || frame_homography(prev, next, config),
                );
                Ok((flow?, homography))
            })
            .collect::<Result<_>>()?;
        for (i, (flow, homography)) in motion.iter().enumerate() {
            let t = start + i;
            if t % interval == 0 {
                tracker.seed(t, &batch[i].0.min_eigenvalue);
            }
            tracker.advance(
                &batch[i].1,
                flow,
                homography.as_ref(),
                &batch[i + 1].0.min_eigenvalue,
            );
            transitions.push(homography.map(|h| mean_displacement(&h, width, height)));
        }
        carry = batch.pop().expect("batch holds at least two frames");
        start = end;
    }
    Ok(VideoAnalysis {
        source_id: video.source_id().to_string(),
        frame_count: n,
        width,
        height,
        fps: video.fps(),
        global: pattern_from_transitions(transitions),
        candidates: tracker.finish(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::extract_features;
    use crate::candidates::tests::short_config;
    use crate::motion::global_motion_pattern;
    use crate::motion::testutil::textured;
    use crate::video_io::FrameSequence;

    fn panning_video(n: usize) -> FrameSequence {
        let frames = (0..n)
            .map(|i| textured(96, 64, [0.6 * i as f64, 0.3 * (i as f64 * 0.4).sin()], 9))
            .collect();
        FrameSequence::new(frames, 60.0, "pan").unwrap()
    }

    #[test]
    fn pattern_matches_standalone_estimate() {
        let config = short_config();
        let video = panning_video(40);
        let analysis = analyze_video(&video, &config).unwrap();
        assert_eq!(analysis.global, global_motion_pattern(&video, &config).unwrap());
        assert_eq!(analysis.global.len(), 39);
    }

    #[test]
    fn rigid_pan_leaves_little_local_motion() {
        let config = short_config();
        let video = panning_video(40);
        let analysis = analyze_video(&video, &config).unwrap();
        assert!(!analysis.candidates.is_empty());
        let mut total = 0.0;
        let mut count = 0;
        for c in &analysis.candidates {
            let t = &c.trajectory;
            assert!(t.len() >= config.min_length && t.len() <= config.max_length);
            assert!(t.end() < video.frames.len());
            for p in &t.points {
                assert!(p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= 95.0 && p[1] <= 63.0);
            }
            for m in &t.local_motion {
                total += (m[0].abs() + m[1].abs()) as f64;
                count += 1;
            }
        }
        assert!(total / (count as f64) < 0.1, "mean |local| = {}", total / count as f64);
    }

    #[test]
    fn streaming_features_match_recomputation() {
        let config = short_config();
        let video = panning_video(30);
        let analysis = analyze_video(&video, &config).unwrap();
        for c in analysis.candidates.iter().take(20) {
            let again = extract_features(&c.trajectory, &video).unwrap();
            assert_eq!(again, c.features);
        }
    }

    #[test]
    fn analysis_is_deterministic() {
        let config = short_config();
        let video = panning_video(25);
        assert_eq!(analyze_video(&video, &config).unwrap(), analyze_video(&video, &config).unwrap());
    }
}
