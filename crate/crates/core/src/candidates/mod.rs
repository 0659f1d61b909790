//! Dense point trajectories and their appearance/motion features.
//!
//! Points are seeded on a regular grid wherever the corner response is
//! strong enough, advanced through dense flow, and kept as candidates when
//! they survive for at least `min_length` frames.

mod analyze;
mod features;
mod store;

pub use analyze::{analyze_video, analyze_video_cached, VideoAnalysis};
pub use features::{extract_features, CandidateFeatures, FeatureAccumulator, FEATURE_COUNT};
pub use store::{read_store, write_store, CandidateStore, SKETCH_MAGIC, STORE_MAGIC};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::imgproc::{self, Plane};
use crate::motion::{median_filter_pattern, FlowField, Homography};
use crate::video_io::{Frame, FrameSource};

/// A tracked point: positions at frames `begin .. begin + len()` and the
/// local motion observed at each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub begin: usize,
    pub points: Vec<[f32; 2]>,
    /// Median-filtered local motion `(u, v)` per point.
    pub local_motion: Vec<[f32; 2]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// One past the last frame covered.
    pub fn end(&self) -> usize {
        self.begin + self.points.len()
    }

    /// Position at absolute frame `t`, if the trajectory is alive then.
    pub fn point_at(&self, t: usize) -> Option<[f32; 2]> {
        t.checked_sub(self.begin)
            .and_then(|i| self.points.get(i))
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub trajectory: Trajectory,
    pub features: CandidateFeatures,
}

/// Grid points whose corner response passes the threshold and that are at
/// least `sample_step` away from every occupied point.
pub fn sample_points(frame: &Frame, occupied: &[[f32; 2]], config: &PipelineConfig) -> Vec<[f32; 2]> {
    let min_eig = imgproc::min_eigenvalue_map(&frame.gray);
    sample_points_from(&min_eig, occupied, config)
}

/// [`sample_points`] with a precomputed corner-response map.
pub fn sample_points_from(
    min_eig: &Plane,
    occupied: &[[f32; 2]],
    config: &PipelineConfig,
) -> Vec<[f32; 2]> {
    let step = config.sample_step.max(1);
    let grid = OccupancyGrid::new(min_eig.width, min_eig.height, step as f32, occupied);
    let threshold = config.gftt_min_eigenvalue;
    let mut out = Vec::new();
    let mut y = step / 2;
    while y < min_eig.height {
        let mut x = step / 2;
        while x < min_eig.width {
            let p = [x as f32, y as f32];
            if min_eig.at(x, y) as f64 >= threshold && !grid.has_neighbor(p) {
                out.push(p);
            }
            x += step;
        }
        y += step;
    }
    out
}

/// Bucketed point set answering "is any point closer than `radius`".
struct OccupancyGrid {
    cell: f32,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<[f32; 2]>>,
}

impl OccupancyGrid {
    fn new(width: usize, height: usize, cell: f32, points: &[[f32; 2]]) -> Self {
        let cols = (width as f32 / cell).ceil() as usize + 1;
        let rows = (height as f32 / cell).ceil() as usize + 1;
        let mut grid = Self {
            cell,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
        };
        for &p in points {
            let (cx, cy) = grid.cell_of(p);
            grid.buckets[cy * cols + cx].push(p);
        }
        grid
    }

    fn cell_of(&self, p: [f32; 2]) -> (usize, usize) {
        let cx = ((p[0] / self.cell).floor().max(0.0) as usize).min(self.cols - 1);
        let cy = ((p[1] / self.cell).floor().max(0.0) as usize).min(self.rows - 1);
        (cx, cy)
    }

    fn has_neighbor(&self, p: [f32; 2]) -> bool {
        let (cx, cy) = self.cell_of(p);
        let r2 = self.cell * self.cell;
        for y in cy.saturating_sub(1)..=(cy + 1).min(self.rows - 1) {
            for x in cx.saturating_sub(1)..=(cx + 1).min(self.cols - 1) {
                for q in &self.buckets[y * self.cols + x] {
                    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
                    if dx * dx + dy * dy < r2 {
                        return true;
                    }
                }
            }
        }
        false
    }
}

struct LiveTrack {
    id: usize,
    begin: usize,
    position: [f32; 2],
    points: Vec<[f32; 2]>,
    raw_motion: Vec<[f32; 2]>,
    color: FeatureAccumulator,
}

/// Incremental trajectory tracker. Drive it frame by frame with
/// [`Tracker::seed`] and [`Tracker::advance`], then call [`Tracker::finish`].
pub struct Tracker<'a> {
    config: &'a PipelineConfig,
    width: usize,
    height: usize,
    live: Vec<LiveTrack>,
    done: Vec<(usize, Candidate)>,
    next_id: usize,
}

impl<'a> Tracker<'a> {
    pub fn new(config: &'a PipelineConfig, width: usize, height: usize) -> Self {
        Self {
            config,
            width,
            height,
            live: Vec::new(),
            done: Vec::new(),
            next_id: 0,
        }
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    /// Starts new trajectories at frame `t` in unoccupied, textured places.
    pub fn seed(&mut self, t: usize, min_eig: &Plane) {
        let occupied: Vec<[f32; 2]> = self.live.iter().map(|l| l.position).collect();
        for p in sample_points_from(min_eig, &occupied, self.config) {
            self.live.push(LiveTrack {
                id: self.next_id,
                begin: t,
                position: p,
                points: Vec::new(),
                raw_motion: Vec::new(),
                color: FeatureAccumulator::default(),
            });
            self.next_id += 1;
        }
    }

    /// Records every live point at frame `t` and moves it to frame `t + 1`
    /// along `flow`. `homography` maps frame `t` to `t + 1` (identity when
    /// estimation failed); `next_min_eig` is the corner response of frame
    /// `t + 1`, used to stop tracks whose tail loses texture.
    pub fn advance(
        &mut self,
        frame: &Frame,
        flow: &FlowField,
        homography: Option<&Homography>,
        next_min_eig: &Plane,
    ) {
        let (w, h) = (self.width as f32, self.height as f32);
        let threshold = self.config.gftt_min_eigenvalue;
        let max_length = self.config.max_length;
        let mut kept = Vec::with_capacity(self.live.len());
        for mut track in std::mem::take(&mut self.live) {
            let [x, y] = track.position;
            let [fu, fv] = flow.sample(x, y);
            let global = homography.map_or([0.0, 0.0], |hm| {
                let d = hm.displacement(x as f64, y as f64);
                [d[0] as f32, d[1] as f32]
            });
            let (px, py) = imgproc::nearest_pixel(x, y, self.width, self.height);
            track.points.push([x, y]);
            track.raw_motion.push([fu - global[0], fv - global[1]]);
            track.color.push_hsv(frame.hsv_at(px, py));
            let next = [x + fu, y + fv];
            let inside = next[0] >= 0.0 && next[1] >= 0.0 && next[0] <= w - 1.0 && next[1] <= h - 1.0;
            let alive = track.points.len() < max_length
                && inside
                && {
                    let (nx, ny) = imgproc::nearest_pixel(next[0], next[1], self.width, self.height);
                    next_min_eig.at(nx, ny) as f64 >= threshold
                };
            if alive {
                track.position = next;
                kept.push(track);
            } else {
                self.retire(track);
            }
        }
        self.live = kept;
    }

    fn retire(&mut self, track: LiveTrack) {
        if track.points.len() < self.config.min_length {
            return;
        }
        let local_motion = median_filter_pattern(&track.raw_motion, self.config.median_window)
            .expect("median window validated by config");
        let trajectory = Trajectory {
            begin: track.begin,
            points: track.points,
            local_motion,
        };
        let features = track.color.finish(&trajectory.local_motion);
        self.done.push((track.id, Candidate { trajectory, features }));
    }

    /// Ends all live tracks (end of video) and returns the candidates in
    /// order of creation.
    pub fn finish(mut self) -> Vec<Candidate> {
        for track in std::mem::take(&mut self.live) {
            self.retire(track);
        }
        self.done.sort_by_key(|(id, _)| *id);
        self.done.into_iter().map(|(_, c)| c).collect()
    }
}

/// Tracks candidates through precomputed flows. `flows[t]` and
/// `homographies[t]` describe the transition from frame `t` to `t + 1`.
pub fn track_candidates(
    video: &dyn FrameSource,
    flows: &[FlowField],
    homographies: &[Option<Homography>],
    config: &PipelineConfig,
) -> Result<Vec<Candidate>> {
    let n = video.frame_count();
    if n < 2 {
        return Err(Error::SequenceTooShort(n));
    }
    if flows.len() != n - 1 || homographies.len() != n - 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} frames need {} flows and homographies, got {} and {}",
            n,
            n - 1,
            flows.len(),
            homographies.len()
        )));
    }
    let (w, h) = video.size();
    let mut tracker = Tracker::new(config, w, h);
    let first = video.frame(0)?;
    let mut current_eig = imgproc::min_eigenvalue_map(&first.gray);
    let mut current = first.into_owned();
    for t in 0..n - 1 {
        if t % config.resample_interval.max(1) == 0 {
            tracker.seed(t, &current_eig);
        }
        let next = video.frame(t + 1)?.into_owned();
        let next_eig = imgproc::min_eigenvalue_map(&next.gray);
        tracker.advance(&current, &flows[t], homographies[t].as_ref(), &next_eig);
        current = next;
        current_eig = next_eig;
    }
    Ok(tracker.finish())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::motion::testutil::textured;
    use crate::video_io::FrameSequence;

    #[test]
    fn flat_frame_has_no_points() {
        let flat = Frame::from_gray(Plane::filled(64, 48, 0.5));
        assert!(sample_points(&flat, &[], &PipelineConfig::default()).is_empty());
    }

    fn checkerboard(size: usize, square: usize) -> Frame {
        Frame::from_gray(Plane::from_fn(size, size, |x, y| {
            if (x / square + y / square).is_multiple_of(2) {
                0.1
            } else {
                0.9
            }
        }))
    }

    #[test]
    fn checkerboard_points_sit_near_corners() {
        let config = PipelineConfig::default();
        let frame = checkerboard(96, 8);
        let eig = imgproc::min_eigenvalue_map(&frame.gray);
        let points = sample_points(&frame, &[], &config);
        assert!(!points.is_empty());
        for (i, p) in points.iter().enumerate() {
            let (x, y) = (p[0] as usize, p[1] as usize);
            assert!(eig.at(x, y) as f64 >= config.gftt_min_eigenvalue);
            // corners are at multiples of 8; the response needs both edges
            // within the 3x3 Sobel support of the 3x3 window
            let near = |v: usize| {
                let r = v % 8;
                r <= 2 || r >= 6
            };
            assert!(near(x) && near(y), "{p:?}");
            for q in &points[i + 1..] {
                let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                assert!(d >= config.sample_step as f32);
            }
        }
    }

    #[test]
    fn fully_occupied_grid_yields_nothing() {
        let config = PipelineConfig::default();
        let frame = textured(64, 48, [0.0, 0.0], 1);
        let all = sample_points(&frame, &[], &config);
        assert!(!all.is_empty());
        assert!(sample_points(&frame, &all, &config).is_empty());
    }

    #[test]
    fn occupied_points_block_their_neighborhood() {
        let config = PipelineConfig::default();
        let frame = textured(64, 48, [0.0, 0.0], 1);
        let occupied = [[20.3f32, 21.7]];
        for p in sample_points(&frame, &occupied, &config) {
            let d = ((p[0] - 20.3).powi(2) + (p[1] - 21.7).powi(2)).sqrt();
            assert!(d >= config.sample_step as f32);
        }
    }

    pub(crate) fn short_config() -> PipelineConfig {
        PipelineConfig {
            min_length: 8,
            max_length: 40,
            median_window: 1,
            ..PipelineConfig::default()
        }
    }

    fn constant_flows(n: usize, w: usize, h: usize, d: [f32; 2]) -> Vec<FlowField> {
        (0..n)
            .map(|_| {
                let mut f = FlowField::zeros(w, h);
                f.u.data.fill(d[0]);
                f.v.data.fill(d[1]);
                f
            })
            .collect()
    }

    #[test]
    fn static_video_gives_stationary_tracks() {
        let config = PipelineConfig {
            max_length: 1024,
            ..short_config()
        };
        let frame = textured(48, 40, [0.0, 0.0], 2);
        let video = FrameSequence::new(vec![frame; 60], 60.0, "static").unwrap();
        let flows = constant_flows(59, 48, 40, [0.0, 0.0]);
        let cands = track_candidates(&video, &flows, &vec![None; 59], &config).unwrap();
        assert!(!cands.is_empty());
        for c in &cands {
            let t = &c.trajectory;
            assert!(t.len() <= 60 - t.begin);
            assert!(t.points.iter().all(|p| *p == t.points[0]));
            assert!(t.local_motion.iter().all(|m| *m == [0.0, 0.0]));
        }
        // all seeds come from frame 0; later passes find the grid occupied
        assert!(cands.iter().all(|c| c.trajectory.begin == 0 && c.trajectory.len() == 59));
    }

    #[test]
    fn uniform_flow_integrates() {
        let config = short_config();
        let frames: Vec<Frame> = (0..30).map(|i| textured(64, 40, [i as f64, 0.0], 3)).collect();
        let video = FrameSequence::new(frames, 60.0, "pan").unwrap();
        let flows = constant_flows(29, 64, 40, [1.0, 0.0]);
        let cands = track_candidates(&video, &flows, &vec![None; 29], &config).unwrap();
        assert!(!cands.is_empty());
        for c in &cands {
            let t = &c.trajectory;
            for (k, p) in t.points.iter().enumerate() {
                assert_eq!(p[0], t.points[0][0] + k as f32);
                assert_eq!(p[1], t.points[0][1]);
                assert!(p[0] <= 63.0);
            }
            assert!(t.local_motion.iter().all(|m| *m == [1.0, 0.0]));
        }
    }

    #[test]
    fn lengths_respect_bounds() {
        let config = short_config();
        let frame = textured(40, 32, [0.0, 0.0], 4);
        let n = config.max_length + 30;
        let video = FrameSequence::new(vec![frame; n], 60.0, "long").unwrap();
        let flows = constant_flows(n - 1, 40, 32, [0.0, 0.0]);
        let cands = track_candidates(&video, &flows, &vec![None; n - 1], &config).unwrap();
        assert!(cands.iter().any(|c| c.trajectory.len() == config.max_length));
        for c in &cands {
            let l = c.trajectory.len();
            assert!((config.min_length..=config.max_length).contains(&l));
            assert_eq!(c.features.length, l as f64);
        }
        let again = track_candidates(&video, &flows, &vec![None; n - 1], &config).unwrap();
        assert_eq!(cands, again);
    }

    #[test]
    fn global_motion_is_subtracted() {
        let config = short_config();
        let frame = textured(48, 40, [0.0, 0.0], 5);
        let video = FrameSequence::new(vec![frame; 20], 60.0, "g").unwrap();
        let flows = constant_flows(19, 48, 40, [0.5, -0.25]);
        let h = Homography::translation(0.5, 0.0);
        let cands = track_candidates(&video, &flows, &vec![Some(h); 19], &config).unwrap();
        assert!(!cands.is_empty());
        for c in &cands {
            assert!(c.trajectory.local_motion.iter().all(|m| *m == [0.0, -0.25]));
        }
    }
}
