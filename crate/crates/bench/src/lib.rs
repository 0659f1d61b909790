//! Shared fixtures for the criterion benchmarks.

use egocorr::candidates::{Candidate, CandidateFeatures, Trajectory, FEATURE_COUNT};
use egocorr::evalsynth::ValueNoise;
use egocorr::imgproc::Plane;
use egocorr::motion::GlobalMotionPattern;
use egocorr::video_io::Frame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gray textured frame of `width x height`, content shifted by `offset`.
pub fn textured_frame(width: usize, height: usize, offset: [f64; 2], seed: u64) -> Frame {
    let coarse = ValueNoise::new(seed, 9.0);
    let fine = ValueNoise::new(seed + 1, 3.0);
    Frame::from_gray(Plane::from_fn(width, height, |x, y| {
        let (sx, sy) = (x as f64 - offset[0], y as f64 - offset[1]);
        (0.1 + 0.6 * coarse.sample(sx, sy) + 0.3 * fine.sample(sx, sy)) as f32
    }))
}

/// Random global motion pattern of `frames - 1` transitions.
pub fn random_pattern(frames: usize, seed: u64) -> GlobalMotionPattern {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GlobalMotionPattern {
        vectors: (1..frames)
            .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect(),
        failed: vec![false; frames - 1],
    }
}

/// `count` random candidates with lengths in `[min_len, max_len]` that fit
/// inside a video of `frames` frames and `width x height` pixels.
pub fn random_candidates(
    count: usize,
    frames: usize,
    min_len: usize,
    max_len: usize,
    width: usize,
    height: usize,
    seed: u64,
) -> Vec<Candidate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let len = rng.random_range(min_len..=max_len.min(frames - 1));
            let begin = rng.random_range(0..frames - len);
            let start = [
                rng.random_range(0.0..width as f32),
                rng.random_range(0.0..height as f32),
            ];
            let points = (0..len)
                .map(|i| {
                    let d = i as f32 * 0.1;
                    [(start[0] + d).min(width as f32 - 1.0), (start[1] + d).min(height as f32 - 1.0)]
                })
                .collect();
            let local_motion = (0..len)
                .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect();
            Candidate {
                trajectory: Trajectory {
                    begin,
                    points,
                    local_motion,
                },
                features: CandidateFeatures::from_array([0.5; FEATURE_COUNT]),
            }
        })
        .collect()
}
