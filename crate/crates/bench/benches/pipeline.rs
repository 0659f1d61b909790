use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use egocorr::candidates::Trajectory;
use egocorr::mapping::build_map;
use egocorr::motion::{dense_flow_prepared, frame_homography, PreparedFrame};
use egocorr::pruning::{sketch_candidates, two_step_scores};
use egocorr::targetness::{candidate_priors, score_exhaustive, zncc, NormalizedPatternPair};
use egocorr::PipelineConfig;
use egocorr_bench::{random_candidates, random_pattern, textured_frame};

fn motion(c: &mut Criterion) {
    let config = PipelineConfig::default();
    let a = PreparedFrame::new(&textured_frame(320, 180, [0.0, 0.0], 3));
    let b = PreparedFrame::new(&textured_frame(320, 180, [1.5, -0.7], 3));
    let mut group = c.benchmark_group("motion");
    group.sample_size(20);
    group.bench_function("dense_flow_320x180", |bench| {
        bench.iter(|| dense_flow_prepared(black_box(&a), black_box(&b)))
    });
    group.bench_function("frame_homography_320x180", |bench| {
        bench.iter(|| frame_homography(black_box(&a), black_box(&b), &config))
    });
    group.finish();
}

fn correlation(c: &mut Criterion) {
    let mut group = c.benchmark_group("zncc");
    for len in [64usize, 256, 1024] {
        let p = random_pattern(len + 1, 1);
        let q = random_pattern(len + 1, 2);
        let pair = NormalizedPatternPair::from_raw(
            [&p.channel(0), &p.channel(1)],
            [&q.channel(0), &q.channel(1)],
        )
        .unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(len), &pair, |bench, pair| {
            bench.iter(|| zncc(black_box(pair)))
        });
    }
    group.finish();
}

fn search(c: &mut Criterion) {
    let frames = 1800;
    let query = random_pattern(frames, 5);
    let candidates = random_candidates(5000, frames, 64, 1024, 320, 180, 6);
    let priors = candidate_priors(&candidates, None);
    let sketches = sketch_candidates(&candidates, 64);
    let mut group = c.benchmark_group("search_5000");
    group.sample_size(10);
    group.bench_function("exhaustive", |bench| {
        bench.iter(|| score_exhaustive(black_box(&candidates), &query, &priors).unwrap())
    });
    for p in [10.0, 25.0] {
        group.bench_with_input(BenchmarkId::new("two_step_k64", p), &p, |bench, &p| {
            bench.iter(|| two_step_scores(black_box(&candidates), &sketches, &query, &priors, 64, p).unwrap())
        });
    }
    group.finish();
}

fn mapping(c: &mut Criterion) {
    let candidates = random_candidates(3000, 400, 64, 300, 320, 180, 7);
    let trajectories: Vec<&Trajectory> = candidates.iter().map(|c| &c.trajectory).collect();
    let scores: Vec<f64> = (0..candidates.len()).map(|i| (i % 97) as f64 / 97.0).collect();
    c.bench_function("build_map_320x180", |bench| {
        bench.iter(|| build_map(black_box(200), &trajectories, &scores, 320, 180, 8.0))
    });
}

criterion_group!(benches, motion, correlation, search, mapping);
criterion_main!(benches);
