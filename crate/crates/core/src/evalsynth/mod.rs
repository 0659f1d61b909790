//! Synthetic multi-person sessions with known ground truth, and the
//! benchmark that runs the pipeline over them.

mod bench;
mod noise;
mod scene;
mod session;
mod spec;

pub use bench::{
    analyze_scene, candidate_labels, evaluate_scene, evaluate_variants, run_benchmark,
    train_held_out_prior, training_samples, write_report, BenchOptions, BenchReport, PairReport,
    RetrievalReport, SceneAnalysis, StageTimings, Variant, HELD_OUT_SEED_OFFSET,
};
pub use noise::ValueNoise;
pub use scene::{video_dir, write_session, DiskScene, Scene, TruthIndex, SIGNALS_FILE, SPEC_FILE, TRUTH_FILE};
pub use session::{
    annotated_frames, band_limited_signal, generate, velocities, OracleSignals, SynthSession, SynthVideo,
};
pub use spec::SynthSpec;
