//! Deterministic rendering of synthetic first-person videos.
//!
//! Every person has a latent head-position signal. In their own video the
//! background is displaced by `(x, -y)` of that signal, so the global
//! motion, once its vertical channel is inverted, follows the head motion.
//! In an observer's video each groupmate's head is drawn on top of the
//! observer's own background and moves with the observer's camera shake
//! plus the groupmate's head motion.

use std::borrow::Cow;
use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::noise::ValueNoise;
use super::spec::SynthSpec;
use crate::error::Result;
use crate::video_io::{hsv_to_rgb, Frame, FrameSource};

const STREAM_PERSON: u64 = 1;
const STREAM_DISTRACTOR: u64 = 2;
const STREAM_JITTER: u64 = 3;

fn stream(seed: u64, kind: u64, index: u64) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(kind.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(index.wrapping_mul(0x94d0_49bb_1331_11eb));
    ChaCha8Rng::seed_from_u64(mixed)
}

fn texture_seed(seed: u64, kind: u64, index: u64) -> u64 {
    seed.rotate_left(17) ^ kind.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ index.wrapping_mul(0x6a09_e667_f3bc_c909)
}

/// Band-limited 2-D position signal: white noise smoothed by a Gaussian
/// whose -3 dB point sits at `bandwidth` Hz, rescaled so that each axis has
/// standard deviation `amplitude`.
pub fn band_limited_signal(rng: &mut ChaCha8Rng, frames: usize, fps: f64, bandwidth: f64, amplitude: f64) -> Vec<[f64; 2]> {
    let sigma = (2f64.ln()).sqrt() / (TAU * bandwidth) * fps;
    let radius = (4.0 * sigma).ceil().max(1.0) as usize;
    let kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-0.5 * d * d / (sigma * sigma)).exp()
        })
        .collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = vec![[0.0; 2]; frames];
    for axis in 0..2 {
        let white: Vec<f64> = (0..frames + 2 * radius).map(|_| normal.sample(rng)).collect();
        let smooth: Vec<f64> = (0..frames)
            .map(|t| kernel.iter().zip(&white[t..]).map(|(k, w)| k * w).sum())
            .collect();
        let mean = smooth.iter().sum::<f64>() / frames as f64;
        let std = (smooth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / frames as f64).sqrt();
        let scale = if std > 0.0 { amplitude / std } else { 0.0 };
        for (o, v) in out.iter_mut().zip(&smooth) {
            o[axis] = (v - mean) * scale;
        }
    }
    out
}

/// Per-transition displacement of a position signal.
pub fn velocities(positions: &[[f64; 2]]) -> Vec<[f64; 2]> {
    positions
        .windows(2)
        .map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]])
        .collect()
}

#[derive(Debug, Clone)]
struct Texture {
    hue: ValueNoise,
    sat: ValueNoise,
    coarse: ValueNoise,
    fine: ValueNoise,
    hue_range: (f64, f64),
    sat_range: (f64, f64),
}

impl Texture {
    fn new(seed: u64, hue_range: (f64, f64), sat_range: (f64, f64), hue_scale: f64) -> Self {
        Self {
            hue: ValueNoise::new(seed ^ 0x11, hue_scale),
            sat: ValueNoise::new(seed ^ 0x22, 23.0),
            coarse: ValueNoise::new(seed ^ 0x33, 11.0),
            fine: ValueNoise::new(seed ^ 0x44, 4.5),
            hue_range,
            sat_range,
        }
    }

    #[inline]
    fn rgb(&self, x: f64, y: f64) -> [f64; 3] {
        let h = self.hue_range.0 + (self.hue_range.1 - self.hue_range.0) * self.hue.sample(x, y);
        let s = self.sat_range.0 + (self.sat_range.1 - self.sat_range.0) * self.sat.sample(x, y);
        let v = 0.2 + 0.45 * self.coarse.sample(x, y) + 0.35 * self.fine.sample(x, y);
        let c = hsv_to_rgb(h.rem_euclid(1.0) as f32, s as f32, v as f32);
        [c[0] as f64, c[1] as f64, c[2] as f64]
    }
}

/// A texture rasterized once on the integer grid of `[x0, x0 + width) x
/// [y0, y0 + height)` and sampled bilinearly afterwards.
#[derive(Debug, Clone)]
struct Bitmap {
    x0: f64,
    y0: f64,
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl Bitmap {
    fn rasterize(texture: &Texture, x0: f64, y0: f64, width: usize, height: usize) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| texture.rgb(x0 + x as f64, y0 + y as f64))
            .collect();
        Self {
            x0,
            y0,
            width,
            height,
            data,
        }
    }

    #[inline]
    fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let fx = (x - self.x0).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - self.y0).clamp(0.0, (self.height - 1) as f64);
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let (ax, ay) = (fx - ix as f64, fy - iy as f64);
        let ix1 = (ix + 1).min(self.width - 1);
        let iy1 = (iy + 1).min(self.height - 1);
        let at = |x: usize, y: usize| self.data[y * self.width + x];
        let (a, b, c, d) = (at(ix, iy), at(ix1, iy), at(ix, iy1), at(ix1, iy1));
        std::array::from_fn(|k| {
            let top = a[k] + ax * (b[k] - a[k]);
            let bottom = c[k] + ax * (d[k] - c[k]);
            top + ay * (bottom - top)
        })
    }
}

/// A moving textured patch in one observer's video.
#[derive(Debug, Clone)]
struct Patch {
    /// Center per frame, in pixels.
    centers: Vec<[f64; 2]>,
    radius: f64,
    round: bool,
    /// Texture in patch-centered coordinates.
    texture: Bitmap,
}

impl Patch {
    /// Coverage in [0, 1] with a one-pixel soft edge.
    #[inline]
    fn alpha(&self, t: usize, x: f64, y: f64) -> f64 {
        let c = self.centers[t];
        let d = if self.round {
            ((x - c[0]).powi(2) + (y - c[1]).powi(2)).sqrt()
        } else {
            (x - c[0]).abs().max((y - c[1]).abs())
        };
        (self.radius - d + 0.5).clamp(0.0, 1.0)
    }

    fn bounds(&self, t: usize, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let c = self.centers[t];
        let r = self.radius + 1.0;
        let x0 = (c[0] - r).floor().max(0.0);
        let y0 = (c[1] - r).floor().max(0.0);
        let x1 = (c[0] + r).ceil().min(width as f64 - 1.0);
        let y1 = (c[1] + r).ceil().min(height as f64 - 1.0);
        (x0 <= x1 && y0 <= y1).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }
}

/// Everything drawn in one person's video.
#[derive(Debug, Clone)]
struct Layout {
    /// Camera-shake offset of the background per frame.
    offsets: Vec<[f64; 2]>,
    background: Bitmap,
    distractors: Vec<Patch>,
    /// `(target person, head patch)`, drawn in this order.
    heads: Vec<(usize, Patch)>,
}

/// Latent signals of a session, kept apart from the rendered videos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSignals {
    /// Head position per person and frame.
    pub positions: Vec<Vec<[f64; 2]>>,
    /// Per-transition head motion per person.
    pub motion: Vec<Vec<[f64; 2]>>,
}

/// A generated session: one video per person plus ground truth.
#[derive(Debug, Clone)]
pub struct SynthSession {
    pub spec: SynthSpec,
    pub signals: OracleSignals,
    layouts: Vec<Layout>,
}

fn patch_bitmap(texture: &Texture, radius: f64) -> Bitmap {
    let half = radius.ceil() + 2.0;
    let side = 2 * half as usize + 1;
    Bitmap::rasterize(texture, -half, -half, side, side)
}

/// Builds the session for a spec. Frames are rendered on demand.
pub fn generate(spec: &SynthSpec, min_length: usize) -> Result<SynthSession> {
    spec.validate(min_length)?;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let positions: Vec<Vec<[f64; 2]>> = (0..spec.people)
        .map(|k| {
            let mut rng = stream(spec.seed, STREAM_PERSON, k as u64);
            band_limited_signal(&mut rng, spec.frames, spec.fps, spec.motion_bandwidth, spec.motion_amplitude)
        })
        .collect();
    let motion = positions.iter().map(|p| velocities(p)).collect();
    let labels = spec.group_labels();
    let head_texture = |j: usize| {
        Texture::new(texture_seed(spec.seed, 10, j as u64), (0.05, 0.12), (0.35, 0.65), 30.0)
    };
    let layouts = (0..spec.people)
        .map(|o| {
            let offsets: Vec<[f64; 2]> = positions[o].iter().map(|p| [p[0], -p[1]]).collect();
            let texture = Texture::new(texture_seed(spec.seed, 20, o as u64), (0.25, 0.85), (0.3, 0.7), 70.0);
            // cover every background position the camera shake can reach
            let reach = offsets
                .iter()
                .flat_map(|p| [p[0].abs(), p[1].abs()])
                .fold(0.0, f64::max)
                .ceil()
                + 2.0;
            let background = Bitmap::rasterize(
                &texture,
                -reach,
                -reach,
                spec.width + 2 * reach as usize,
                spec.height + 2 * reach as usize,
            );
            let mates: Vec<usize> = (0..spec.people).filter(|&j| j != o && labels[j] == labels[o]).collect();
            let slots = mates.len() + 1;
            let heads = mates
                .iter()
                .enumerate()
                .map(|(slot, &j)| {
                    let anchor = [w * (slot + 1) as f64 / (slots as f64), h * 0.5];
                    let mut rng = stream(spec.seed, STREAM_JITTER, (o * spec.people + j) as u64);
                    // position jitter of std sigma / sqrt(2) gives frame-to-frame
                    // motion noise of std sigma
                    let jitter = Normal::new(0.0, spec.noise_sigma / 2f64.sqrt()).expect("finite sigma");
                    let centers = (0..spec.frames)
                        .map(|t| {
                            let (jx, jy) = if spec.noise_sigma > 0.0 {
                                (jitter.sample(&mut rng), jitter.sample(&mut rng))
                            } else {
                                (0.0, 0.0)
                            };
                            [
                                anchor[0] + offsets[t][0] + positions[j][t][0] + jx,
                                anchor[1] + offsets[t][1] + positions[j][t][1] + jy,
                            ]
                        })
                        .collect();
                    let patch = Patch {
                        centers,
                        radius: spec.head_size / 2.0,
                        round: true,
                        texture: patch_bitmap(&head_texture(j), spec.head_size / 2.0),
                    };
                    (j, patch)
                })
                .collect();
            let distractors = (0..spec.distractors)
                .map(|d| {
                    let mut rng = stream(spec.seed, STREAM_DISTRACTOR, (o * 64 + d) as u64);
                    let signal = band_limited_signal(
                        &mut rng,
                        spec.frames,
                        spec.fps,
                        spec.motion_bandwidth,
                        spec.motion_amplitude,
                    );
                    // alternate between the upper and lower bands of the frame
                    let column = (d / 2 + 1) as f64 / (spec.distractors.div_ceil(2) + 1) as f64;
                    let row = if d % 2 == 0 { 0.17 } else { 0.83 };
                    let anchor = [w * (column * 0.8 + 0.1 * (d % 2) as f64), h * row];
                    let centers = (0..spec.frames)
                        .map(|t| [anchor[0] + offsets[t][0] + signal[t][0], anchor[1] + offsets[t][1] + signal[t][1]])
                        .collect();
                    let hue = 0.45 + 0.25 * (d % 3) as f64 / 2.0;
                    let texture = Texture::new(
                        texture_seed(spec.seed, 30, (o * 64 + d) as u64),
                        (hue, hue + 0.12),
                        (0.4, 0.8),
                        30.0,
                    );
                    Patch {
                        centers,
                        radius: spec.head_size * 0.3,
                        round: false,
                        texture: patch_bitmap(&texture, spec.head_size * 0.3),
                    }
                })
                .collect();
            Layout {
                offsets,
                background,
                distractors,
                heads,
            }
        })
        .collect();
    Ok(SynthSession {
        spec: spec.clone(),
        signals: OracleSignals { positions, motion },
        layouts,
    })
}

impl SynthSession {
    pub fn people(&self) -> usize {
        self.spec.people
    }

    pub fn source_id(person: usize) -> String {
        format!("p{person}")
    }

    /// Interleaved 8-bit RGB of person `person`'s frame `t`.
    pub fn render_rgb8(&self, person: usize, t: usize) -> Vec<u8> {
        let (w, h) = (self.spec.width, self.spec.height);
        let layout = &self.layouts[person];
        let off = layout.offsets[t];
        let mut img = vec![0.0f64; w * h * 3];
        for y in 0..h {
            for x in 0..w {
                let c = layout.background.sample(x as f64 - off[0], y as f64 - off[1]);
                img[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&c);
            }
        }
        let patches = layout.distractors.iter().chain(layout.heads.iter().map(|(_, p)| p));
        for patch in patches {
            let Some((x0, y0, x1, y1)) = patch.bounds(t, w, h) else { continue };
            let c = patch.centers[t];
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (xf, yf) = (x as f64, y as f64);
                    let a = patch.alpha(t, xf, yf);
                    if a <= 0.0 {
                        continue;
                    }
                    let col = patch.texture.sample(xf - c[0], yf - c[1]);
                    let px = &mut img[(y * w + x) * 3..(y * w + x) * 3 + 3];
                    for k in 0..3 {
                        px[k] = (1.0 - a) * px[k] + a * col[k];
                    }
                }
            }
        }
        img.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn render(&self, person: usize, t: usize) -> Frame {
        Frame::from_rgb8(self.spec.width, self.spec.height, &self.render_rgb8(person, t))
    }

    /// Visible support of `target`'s head in `observer`'s frame `t`, or
    /// `None` when the target does not appear in that video.
    pub fn truth_mask(&self, observer: usize, target: usize, t: usize) -> Option<Vec<bool>> {
        let layout = &self.layouts[observer];
        let idx = layout.heads.iter().position(|(j, _)| *j == target)?;
        let (w, h) = (self.spec.width, self.spec.height);
        let mut mask = vec![false; w * h];
        let head = &layout.heads[idx].1;
        if let Some((x0, y0, x1, y1)) = head.bounds(t, w, h) {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (xf, yf) = (x as f64, y as f64);
                    let covered_later = layout.heads[idx + 1..]
                        .iter()
                        .any(|(_, p)| p.alpha(t, xf, yf) >= 0.5);
                    mask[y * w + x] = head.alpha(t, xf, yf) >= 0.5 && !covered_later;
                }
            }
        }
        Some(mask)
    }

    /// People whose heads appear in `observer`'s video.
    pub fn visible_targets(&self, observer: usize) -> Vec<usize> {
        self.layouts[observer].heads.iter().map(|(j, _)| *j).collect()
    }

    /// Frames with ground truth: every half second, excluding the last
    /// frame (no trajectory point can be recorded there).
    pub fn annotated_frames(&self) -> Vec<usize> {
        annotated_frames(self.spec.frames, self.spec.fps)
    }

    pub fn video(&self, person: usize) -> SynthVideo<'_> {
        SynthVideo {
            session: self,
            person,
            id: Self::source_id(person),
        }
    }
}

pub fn annotated_frames(frames: usize, fps: f64) -> Vec<usize> {
    let step = (fps / 2.0).round().max(1.0) as usize;
    (0..frames.saturating_sub(1)).step_by(step).collect()
}

/// One person's video, rendered frame by frame.
pub struct SynthVideo<'a> {
    session: &'a SynthSession,
    person: usize,
    id: String,
}

impl FrameSource for SynthVideo<'_> {
    fn frame_count(&self) -> usize {
        self.session.spec.frames
    }
    fn size(&self) -> (usize, usize) {
        (self.session.spec.width, self.session.spec.height)
    }
    fn fps(&self) -> f64 {
        self.session.spec.fps
    }
    fn source_id(&self) -> &str {
        &self.id
    }
    fn frame(&self, index: usize) -> Result<Cow<'_, Frame>> {
        Ok(Cow::Owned(self.session.render(self.person, index)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineConfig;
    use crate::motion::{dense_flow, frame_homography, global_motion_pattern, PreparedFrame};
    use crate::targetness::{zncc, NormalizedPatternPair};

    fn small_spec(seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            people: 3,
            frames: 80,
            ..SynthSpec::default()
        }
    }

    fn correlation(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
        let ch = |s: &[[f64; 2]], k: usize| s.iter().map(|v| v[k]).collect::<Vec<_>>();
        // the pair constructor inverts the second vertical channel, so undo it
        let bv: Vec<f64> = ch(b, 1).iter().map(|v| -v).collect();
        zncc(&NormalizedPatternPair::from_raw([&ch(a, 0), &ch(a, 1)], [&ch(b, 0), &bv]).unwrap())
    }

    #[test]
    fn signal_has_requested_amplitude() {
        let mut rng = stream(3, STREAM_PERSON, 0);
        let s = band_limited_signal(&mut rng, 600, 60.0, 2.0, 6.0);
        for axis in 0..2 {
            let mean = s.iter().map(|p| p[axis]).sum::<f64>() / 600.0;
            let var = s.iter().map(|p| (p[axis] - mean).powi(2)).sum::<f64>() / 600.0;
            assert!(mean.abs() < 1e-9 && (var.sqrt() - 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = PipelineConfig::default();
        let a = generate(&small_spec(5), config.min_length).unwrap();
        let b = generate(&small_spec(5), config.min_length).unwrap();
        assert_eq!(a.signals, b.signals);
        for p in 0..3 {
            for t in [0, 17, 79] {
                assert_eq!(a.render_rgb8(p, t), b.render_rgb8(p, t));
                assert_eq!(a.truth_mask(p, (p + 1) % 3, t), b.truth_mask(p, (p + 1) % 3, t));
            }
        }
        let c = generate(&small_spec(6), config.min_length).unwrap();
        assert_ne!(a.render_rgb8(0, 0), c.render_rgb8(0, 0));
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let spec = SynthSpec {
            frames: 20,
            ..SynthSpec::default()
        };
        assert!(generate(&spec, 64).is_err());
    }

    #[test]
    fn masks_follow_groups_and_stay_in_view() {
        let spec = SynthSpec {
            people: 4,
            groups: vec![vec![0, 2], vec![1, 3]],
            ..small_spec(8)
        };
        let s = generate(&spec, 64).unwrap();
        assert_eq!(s.visible_targets(0), vec![2]);
        assert_eq!(s.visible_targets(3), vec![1]);
        assert!(s.truth_mask(0, 1, 0).is_none());
        for t in s.annotated_frames() {
            let m = s.truth_mask(0, 2, t).unwrap();
            let area = m.iter().filter(|&&v| v).count() as f64;
            let disc = std::f64::consts::PI * (spec.head_size / 2.0).powi(2);
            assert!(area > 0.8 * disc && area < 1.2 * disc, "area {area}");
        }
        assert_eq!(s.annotated_frames(), (0..79).step_by(30).collect::<Vec<_>>());
    }

    #[test]
    fn recovered_patterns_match_latent_motion() {
        // generator self-check: noise-free, no distractors
        let spec = SynthSpec {
            seed: 11,
            people: 2,
            frames: 96,
            distractors: 0,
            ..SynthSpec::default()
        };
        let config = PipelineConfig::default();
        let s = generate(&spec, config.min_length).unwrap();
        let global = global_motion_pattern(&s.video(1), &config).unwrap();
        assert!(!global.failed.iter().any(|&f| f));
        // the recovered pattern, with its vertical channel inverted, follows
        // the latent head motion
        let flipped: Vec<[f64; 2]> = global.vectors.iter().map(|v| [v[0], -v[1]]).collect();
        let c_global = correlation(&flipped, &s.signals.motion[1]);
        assert!(c_global >= 0.95, "global vs latent {c_global}");

        // local motion at the head center of person 1 in person 0's video
        let head = &s.layouts[0].heads[0].1;
        let local: Vec<[f64; 2]> = (0..spec.frames - 1)
            .map(|t| {
                let (f0, f1) = (s.render(0, t), s.render(0, t + 1));
                let flow = dense_flow(&f0, &f1);
                let h = frame_homography(&PreparedFrame::new(&f0), &PreparedFrame::new(&f1), &config).unwrap();
                let c = head.centers[t];
                let [u, v] = flow.sample(c[0] as f32, c[1] as f32);
                let g = h.displacement(c[0], c[1]);
                [u as f64 - g[0], v as f64 - g[1]]
            })
            .collect();
        let c = zncc(
            &NormalizedPatternPair::from_raw(
                [&local.iter().map(|v| v[0]).collect::<Vec<_>>(), &local.iter().map(|v| v[1]).collect::<Vec<_>>()],
                [&global.channel(0), &global.channel(1)],
            )
            .unwrap(),
        );
        assert!(c >= 0.9, "head local motion vs target global motion {c}");
    }

    #[test]
    fn independent_signals_are_nearly_uncorrelated() {
        let spec = SynthSpec::default();
        let mut small = 0;
        for seed in 0..100 {
            let s = SynthSpec { seed, ..spec.clone() };
            let mut a = stream(s.seed, STREAM_PERSON, 0);
            let mut b = stream(s.seed, STREAM_PERSON, 1);
            let va = velocities(&band_limited_signal(&mut a, s.frames, s.fps, s.motion_bandwidth, 6.0));
            let vb = velocities(&band_limited_signal(&mut b, s.frames, s.fps, s.motion_bandwidth, 6.0));
            if correlation(&va, &vb).abs() < 0.3 {
                small += 1;
            }
        }
        assert!(small >= 95, "{small} of 100 seeds below 0.3");
    }
}
