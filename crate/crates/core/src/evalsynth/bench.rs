//! End-to-end evaluation over a scene: localization AUC per (target,
//! observer) pair, retrieval R-precision, clustering metrics, exact
//! evaluation counts and stage timings.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::Scene;
use super::session::generate;
use super::spec::SynthSpec;
use crate::affinity::{
    affinity_propagation, clustering_metrics, directed_from_scores, mean_candidate_length,
    r_precision, retrieve, AffinityMatrix, AffinitySource, ClusterMetrics, PropagationParams,
};
use crate::candidates::{analyze_video, Candidate, CandidateFeatures, VideoAnalysis};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::mapping::{build_maps, maps_auc};
use crate::motion::GlobalMotionPattern;
use crate::pruning::{sketch_candidates, two_step_scores, PaaSketch};
use crate::targetness::{
    candidate_priors, label_candidates, score_exhaustive, train_prior, CandidateScore, PriorModel,
};

/// Seed offset of the held-out session used to train a prior.
pub const HELD_OUT_SEED_OFFSET: u64 = 1_000_003;

/// Which scoring and affinity scheme to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Exact correlation for every candidate, no prior.
    Correlation,
    /// Exact correlation weighted by the learned prior.
    CorrelationPrior,
    /// Bound-based preselection, then exact correlation for the top share.
    TwoStep { top_percent: f64, pieces: usize },
    /// Like [`Variant::Correlation`] but with one-directional affinity.
    Asymmetric,
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Self::Correlation => "C".into(),
            Self::CorrelationPrior => "C+G".into(),
            Self::TwoStep { top_percent, pieces } => format!("two-step(P={top_percent},K={pieces})"),
            Self::Asymmetric => "asym".into(),
        }
    }

    /// Parses `c`, `c+g`, `asym`, `two-step` (pruning parameters from
    /// `config`) or `two-step:P:K`.
    pub fn parse(text: &str, config: &PipelineConfig) -> Result<Self> {
        let lower = text.trim().to_ascii_lowercase();
        let bad = || Error::InvalidArgument(format!("unknown variant `{text}`"));
        match lower.as_str() {
            "c" | "correlation" => Ok(Self::Correlation),
            "c+g" | "cg" | "prior" => Ok(Self::CorrelationPrior),
            "asym" | "asymmetric" => Ok(Self::Asymmetric),
            "two-step" | "twostep" => Ok(Self::TwoStep {
                top_percent: config.top_percent,
                pieces: config.pieces,
            }),
            other => {
                let rest = other.strip_prefix("two-step:").ok_or_else(bad)?;
                let (p, k) = rest.split_once(':').ok_or_else(bad)?;
                Ok(Self::TwoStep {
                    top_percent: p.parse().map_err(|_| bad())?,
                    pieces: k.parse().map_err(|_| bad())?,
                })
            }
        }
    }

    pub fn uses_prior(&self) -> bool {
        matches!(self, Self::CorrelationPrior)
    }

    fn symmetric(&self) -> bool {
        !matches!(self, Self::Asymmetric)
    }

    fn affinity_source(&self) -> AffinitySource {
        if self.uses_prior() {
            AffinitySource::Posterior
        } else {
            AffinitySource::Likelihood
        }
    }
}

/// Per-video analyses of a scene, computed once and shared by variants.
#[derive(Debug, Clone)]
pub struct SceneAnalysis {
    pub videos: Vec<VideoAnalysis>,
    /// Median-filtered global motion per video.
    pub queries: Vec<GlobalMotionPattern>,
    pub seconds: f64,
}

pub fn analyze_scene(scene: &dyn Scene, config: &PipelineConfig) -> Result<SceneAnalysis> {
    let start = Instant::now();
    let mut videos = Vec::with_capacity(scene.people());
    for p in 0..scene.people() {
        videos.push(analyze_video(&*scene.video(p)?, config)?);
    }
    let queries = videos
        .iter()
        .map(|v| v.query_pattern(config))
        .collect::<Result<_>>()?;
    Ok(SceneAnalysis {
        videos,
        queries,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Training label per candidate of `observer`'s video: positive when at
/// least half of its points on annotated frames fall inside some visible
/// head.
pub fn candidate_labels(scene: &dyn Scene, observer: usize, candidates: &[Candidate]) -> Result<Vec<bool>> {
    let (w, h) = scene.size();
    let targets = scene.visible_targets(observer);
    let frames = scene.annotated_frames();
    let unions: Vec<Vec<bool>> = frames
        .iter()
        .map(|&t| {
            let mut union = vec![false; w * h];
            for &j in &targets {
                for (u, m) in union.iter_mut().zip(scene.truth_mask(observer, j, t)?) {
                    *u |= m;
                }
            }
            Ok(union)
        })
        .collect::<Result<_>>()?;
    label_candidates(candidates, &frames, &unions, w, h)
}

/// Labeled features from every video of an analyzed scene.
pub fn training_samples(scene: &dyn Scene, analysis: &SceneAnalysis) -> Result<Vec<(CandidateFeatures, bool)>> {
    let mut out = Vec::new();
    for (o, video) in analysis.videos.iter().enumerate() {
        let labels = candidate_labels(scene, o, &video.candidates)?;
        out.extend(video.candidates.iter().map(|c| c.features).zip(labels));
    }
    Ok(out)
}

/// Trains a prior on a held-out session generated from `spec` with a
/// shifted seed.
pub fn train_held_out_prior(spec: &SynthSpec, config: &PipelineConfig) -> Result<PriorModel> {
    let held_out = SynthSpec {
        seed: spec.seed.wrapping_add(HELD_OUT_SEED_OFFSET),
        ..spec.clone()
    };
    let session = generate(&held_out, config.min_length)?;
    let analysis = analyze_scene(&session, config)?;
    let samples = training_samples(&session, &analysis)?;
    train_prior(&samples, &format!("synthetic seed {}", held_out.seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub observer: String,
    pub target: String,
    /// Pooled pixel AUC over annotated frames; absent when the target never
    /// appears or covers every pixel.
    pub auc: Option<f64>,
    pub candidates: usize,
    pub exact_evaluations: usize,
    pub step_one_multiply_adds: u64,
    /// Highest-posterior candidate (lowest index on ties).
    pub top_candidate: Option<usize>,
    pub top_posterior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub query: String,
    pub ranked: Vec<String>,
    pub r_precision: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub analysis_s: f64,
    pub scoring_s: f64,
    pub mapping_s: f64,
    pub affinity_s: f64,
    pub clustering_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub variant: Variant,
    pub variant_name: String,
    pub spec: Option<SynthSpec>,
    pub pairs: Vec<PairReport>,
    pub mean_auc: Option<f64>,
    pub retrieval: Vec<RetrievalReport>,
    pub mean_r_precision: Option<f64>,
    pub clustering: ClusterMetrics,
    pub cluster_labels: Vec<usize>,
    pub cluster_converged: bool,
    pub affinity: AffinityMatrix,
    /// Mean candidate length used as the length-weight center.
    pub length_center: f64,
    pub total_candidates: usize,
    pub exact_evaluations: usize,
    pub step_one_multiply_adds: u64,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Default)]
pub struct BenchOptions {
    /// Prior for [`Variant::CorrelationPrior`]; trained on a held-out
    /// session when absent and the scene carries its spec.
    pub prior: Option<PriorModel>,
    pub propagation: PropagationParams,
}

struct PairScores {
    scores: Vec<CandidateScore>,
    exact_evaluations: usize,
    step_one_multiply_adds: u64,
}

fn score_pair(
    candidates: &[Candidate],
    sketches: Option<&[Option<PaaSketch>]>,
    query: &GlobalMotionPattern,
    priors: &[f64],
    variant: Variant,
) -> Result<PairScores> {
    match (variant, sketches) {
        (Variant::TwoStep { top_percent, pieces }, Some(sk)) => {
            let r = two_step_scores(candidates, sk, query, priors, pieces, top_percent)?;
            Ok(PairScores {
                scores: r.scores,
                exact_evaluations: r.exact_evaluations,
                step_one_multiply_adds: r.step_one_multiply_adds,
            })
        }
        _ => Ok(PairScores {
            scores: score_exhaustive(candidates, query, priors)?,
            exact_evaluations: candidates.len(),
            step_one_multiply_adds: 0,
        }),
    }
}

fn top_candidate(scores: &[CandidateScore]) -> (Option<usize>, f64) {
    let mut best: (Option<usize>, f64) = (None, f64::NEG_INFINITY);
    for (i, s) in scores.iter().enumerate() {
        if s.posterior > best.1 {
            best = (Some(i), s.posterior);
        }
    }
    (best.0, best.1.max(0.0))
}

/// Runs one variant over an analyzed scene.
pub fn evaluate_scene(
    scene: &dyn Scene,
    analysis: &SceneAnalysis,
    config: &PipelineConfig,
    variant: Variant,
    options: &BenchOptions,
) -> Result<BenchReport> {
    let n = scene.people();
    if analysis.videos.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} analyses for {n} videos",
            analysis.videos.len()
        )));
    }
    let trained;
    let prior = match (variant.uses_prior(), &options.prior, scene.spec()) {
        (false, _, _) => None,
        (true, Some(p), _) => Some(p),
        (true, None, Some(spec)) => {
            trained = train_held_out_prior(spec, config)?;
            Some(&trained)
        }
        (true, None, None) => {
            return Err(Error::InvalidArgument(
                "the C+G variant needs a prior model or a scene spec to train one".into(),
            ))
        }
    };
    let ids: Vec<String> = (0..n).map(|p| scene.source_id(p)).collect();
    let mut timings = StageTimings {
        analysis_s: analysis.seconds,
        ..Default::default()
    };

    let clock = Instant::now();
    let priors: Vec<Vec<f64>> = analysis
        .videos
        .iter()
        .map(|v| candidate_priors(&v.candidates, prior))
        .collect();
    let sketches: Vec<Option<Vec<Option<PaaSketch>>>> = analysis
        .videos
        .iter()
        .map(|v| match variant {
            Variant::TwoStep { pieces, .. } => Some(sketch_candidates(&v.candidates, pieces)),
            _ => None,
        })
        .collect();
    // scores[q][p]: target q searched in observer p's video
    let mut scores: Vec<Vec<Option<PairScores>>> = (0..n).map(|_| (0..n).map(|_| None).collect()).collect();
    for (q, row) in scores.iter_mut().enumerate() {
        for (p, cell) in row.iter_mut().enumerate() {
            if p != q {
                *cell = Some(score_pair(
                    &analysis.videos[p].candidates,
                    sketches[p].as_deref(),
                    &analysis.queries[q],
                    &priors[p],
                    variant,
                )?);
            }
        }
    }
    timings.scoring_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (w, h) = scene.size();
    let frames = scene.annotated_frames();
    let mut pairs = Vec::new();
    for o in 0..n {
        let candidates = &analysis.videos[o].candidates;
        let trajectories: Vec<_> = candidates.iter().map(|c| &c.trajectory).collect();
        for j in scene.visible_targets(o) {
            let ps = scores[j][o].as_ref().expect("off-diagonal pair scored");
            let values: Vec<f64> = ps.scores.iter().map(|s| s.posterior).collect();
            let maps = build_maps(&frames, &trajectories, &values, w, h, config.radius());
            let truths = frames
                .iter()
                .map(|&t| scene.truth_mask(o, j, t))
                .collect::<Result<Vec<_>>>()?;
            let auc = match maps_auc(&maps, &truths) {
                Ok(a) => Some(a),
                Err(Error::DegenerateTruth) => None,
                Err(e) => return Err(e),
            };
            let (top, top_posterior) = top_candidate(&ps.scores);
            pairs.push(PairReport {
                observer: ids[o].clone(),
                target: ids[j].clone(),
                auc,
                candidates: candidates.len(),
                exact_evaluations: ps.exact_evaluations,
                step_one_multiply_adds: ps.step_one_multiply_adds,
                top_candidate: top,
                top_posterior,
            });
        }
    }
    timings.mapping_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let length_center = mean_candidate_length(
        analysis
            .videos
            .iter()
            .flat_map(|v| v.candidates.iter().map(|c| c.trajectory.len())),
    )?;
    let lengths: Vec<Vec<usize>> = analysis
        .videos
        .iter()
        .map(|v| v.candidates.iter().map(|c| c.trajectory.len()).collect())
        .collect();
    let directed: Vec<Vec<f64>> = (0..n)
        .map(|q| {
            (0..n)
                .map(|p| match &scores[q][p] {
                    Some(ps) => directed_from_scores(&ps.scores, &lengths[p], length_center, variant.affinity_source()),
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    let affinity = AffinityMatrix::from_directed(ids.clone(), &directed, variant.symmetric())?;
    let labels = scene.group_labels();
    let mut retrieval = Vec::new();
    for q in 0..n {
        let relevant: Vec<usize> = (0..n).filter(|&i| i != q && labels[i] == labels[q]).collect();
        if relevant.is_empty() {
            continue;
        }
        let ranked = retrieve(q, &affinity);
        retrieval.push(RetrievalReport {
            query: ids[q].clone(),
            ranked: ranked.iter().map(|&i| ids[i].clone()).collect(),
            r_precision: r_precision(&ranked, &relevant)?,
        });
    }
    timings.affinity_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let clusters = affinity_propagation(&affinity.values, &options.propagation)?;
    let cluster_labels = clusters.labels();
    let clustering = clustering_metrics(&cluster_labels, &labels)?;
    timings.clustering_s = clock.elapsed().as_secs_f64();

    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(BenchReport {
        variant,
        variant_name: variant.name(),
        spec: scene.spec().cloned(),
        mean_auc: mean(pairs.iter().filter_map(|p| p.auc).collect()),
        mean_r_precision: mean(retrieval.iter().map(|r| r.r_precision).collect()),
        exact_evaluations: pairs.iter().map(|p| p.exact_evaluations).sum(),
        step_one_multiply_adds: pairs.iter().map(|p| p.step_one_multiply_adds).sum(),
        total_candidates: analysis.videos.iter().map(|v| v.candidates.len()).sum(),
        pairs,
        retrieval,
        clustering,
        cluster_labels,
        cluster_converged: clusters.converged,
        affinity,
        length_center,
        timings,
    })
}

/// Generates the session for `spec`, analyzes it and evaluates `variant`.
pub fn run_benchmark(
    spec: &SynthSpec,
    config: &PipelineConfig,
    variant: Variant,
    options: &BenchOptions,
) -> Result<BenchReport> {
    let session = generate(spec, config.min_length)?;
    let analysis = analyze_scene(&session, config)?;
    evaluate_scene(&session, &analysis, config, variant, options)
}

/// Runs several variants on one analysis.
pub fn evaluate_variants(
    scene: &dyn Scene,
    analysis: &SceneAnalysis,
    config: &PipelineConfig,
    variants: &[Variant],
    options: &BenchOptions,
) -> Result<Vec<BenchReport>> {
    variants
        .par_iter()
        .map(|&v| evaluate_scene(scene, analysis, config, v, options))
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Writes `report.json` and the CSV tables (per-pair localization,
/// retrieval, clustering, cost and timing summary) into `dir`.
pub fn write_report(reports: &[BenchReport], dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    put("report.json", serde_json::to_string_pretty(reports)? + "\n")?;

    let mut t = String::from("variant,observer,target,auc,candidates,exact_evaluations,step_one_multiply_adds,top_candidate\n");
    for r in reports {
        for p in &r.pairs {
            let top = p.top_candidate.map_or_else(String::new, |i| i.to_string());
            let _ = writeln!(
                t,
                "{},{},{},{},{},{},{},{}",
                r.variant_name,
                p.observer,
                p.target,
                opt(p.auc),
                p.candidates,
                p.exact_evaluations,
                p.step_one_multiply_adds,
                top
            );
        }
    }
    put("localization.csv", t)?;

    let mut t = String::from("variant,query,r_precision\n");
    for r in reports {
        for q in &r.retrieval {
            let _ = writeln!(t, "{},{},{:.6}", r.variant_name, q.query, q.r_precision);
        }
    }
    put("retrieval.csv", t)?;

    let mut t = String::from("variant,precision,recall,f_measure,groups,converged\n");
    for r in reports {
        let c = &r.clustering;
        let _ = writeln!(
            t,
            "{},{:.6},{:.6},{:.6},{},{}",
            r.variant_name, c.precision, c.recall, c.f_measure, c.groups, r.cluster_converged
        );
    }
    put("clustering.csv", t)?;

    let mut t = String::from(
        "variant,mean_auc,mean_r_precision,f_measure,total_candidates,exact_evaluations,step_one_multiply_adds,analysis_s,scoring_s,mapping_s,affinity_s,clustering_s\n",
    );
    for r in reports {
        let s = &r.timings;
        let _ = writeln!(
            t,
            "{},{},{},{:.6},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3}",
            r.variant_name,
            opt(r.mean_auc),
            opt(r.mean_r_precision),
            r.clustering.f_measure,
            r.total_candidates,
            r.exact_evaluations,
            r.step_one_multiply_adds,
            s.analysis_s,
            s.scoring_s,
            s.mapping_s,
            s.affinity_s,
            s.clustering_s
        );
    }
    put("summary.csv", t)?;
    Ok(written)
}
