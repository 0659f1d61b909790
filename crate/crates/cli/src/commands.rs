use std::path::{Path, PathBuf};

use egocorr::affinity::{
    affinity_propagation, directed_from_scores, mean_candidate_length, r_precision, retrieve,
    AffinityMatrix, AffinitySource, PropagationParams,
};
use egocorr::candidates::{analyze_video_cached, read_store, write_store, Candidate, CandidateStore};
use egocorr::evalsynth::{
    analyze_scene, evaluate_variants, generate, training_samples, write_report, write_session,
    BenchOptions, DiskScene, SynthSpec, Variant,
};
use egocorr::mapping::{build_maps, export_mask, maps_auc, write_mask_pgm, TargetnessMap};
use egocorr::motion::{global_motion_pattern, read_pattern_csv, write_pattern_csv, GlobalMotionPattern};
use egocorr::pruning::{sketch_candidates, two_step_scores, PaaSketch};
use egocorr::targetness::{
    candidate_priors, label_candidates, read_scores_csv, score_exhaustive, scores_to_csv,
    train_prior, CandidateScore, PriorModel,
};
use egocorr::video_io::{read_pgm, DiskSequence, FrameSource, VideoManifest};
use egocorr::{Error, PipelineConfig, Result};
use serde::Serialize;

use crate::args::*;
use crate::repository::{
    resolve, RepositoryEntry, RepositoryManifest, MOTION_FILE, REPOSITORY_FILE, STORE_FILE, VIDEO_FILE,
};
use crate::Outcome;

pub fn run(command: &Command, config: &PipelineConfig) -> Result<Outcome> {
    match command {
        Command::Motion(a) => motion(a, config),
        Command::Extract(a) => extract(a, config),
        Command::TrainPrior(a) => train(a, config),
        Command::Score(a) => score(a, config),
        Command::Map(a) => map(a, config),
        Command::Mask(a) => mask(a, config),
        Command::Auc(a) => auc(a),
        Command::Affinity(a) => affinity(a, config),
        Command::Retrieve(a) => retrieve_cmd(a),
        Command::Cluster(a) => cluster(a),
        Command::Synth(a) => synth(a, config),
        Command::Bench(a) => bench(a, config),
    }
}

fn invalid(message: impl Into<String>) -> Error {
    Error::InvalidArgument(message.into())
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(std::fs::create_dir_all(dir)?),
        _ => Ok(()),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn motion(a: &MotionArgs, config: &PipelineConfig) -> Result<Outcome> {
    let video = DiskSequence::open_default(&a.video, config)?;
    let pattern = match &a.flow_cache {
        Some(cache) => analyze_video_cached(&video, config, Some(cache))?.global,
        None => global_motion_pattern(&video, config)?,
    };
    ensure_parent(&a.out)?;
    write_pattern_csv(&a.out, &pattern)?;
    Ok(Outcome {
        outputs: vec![a.out.clone()],
        ..Default::default()
    })
}

fn extract(a: &ExtractArgs, config: &PipelineConfig) -> Result<Outcome> {
    std::fs::create_dir_all(&a.out)?;
    let manifest_path = a.out.join(REPOSITORY_FILE);
    let mut manifest = if manifest_path.is_file() {
        RepositoryManifest::read(&manifest_path)?
    } else {
        RepositoryManifest::default()
    };
    let mut outputs = Vec::new();
    for dir in &a.video {
        let video = DiskSequence::open_default(dir, config)?;
        let id = video.source_id().to_string();
        if id.is_empty() || id.contains(['/', '\\', ',']) || id.starts_with('.') {
            return Err(Error::Format {
                path: dir.clone(),
                message: format!("source id `{id}` cannot name a directory"),
            });
        }
        let cache = a.flow_cache.as_ref().map(|root| root.join(&id));
        let analysis = analyze_video_cached(&video, config, cache.as_deref())?;
        let sketches = (!a.no_sketch).then(|| {
            (config.pieces, sketch_candidates(&analysis.candidates, config.pieces))
        });
        let out_dir = a.out.join(&id);
        std::fs::create_dir_all(&out_dir)?;
        let store_path = out_dir.join(STORE_FILE);
        let sketch_present = sketches.is_some();
        write_store(
            &store_path,
            &CandidateStore {
                candidates: analysis.candidates,
                sketches,
            },
        )?;
        let motion_path = out_dir.join(MOTION_FILE);
        write_pattern_csv(&motion_path, &analysis.global)?;
        let video_path = out_dir.join(VIDEO_FILE);
        VideoManifest {
            source_id: id.clone(),
            fps: analysis.fps,
            frame_count: analysis.frame_count,
            width: analysis.width,
            height: analysis.height,
        }
        .write(&video_path)?;
        let frames_dir = std::fs::canonicalize(dir)?;
        manifest.upsert(RepositoryEntry {
            source_id: id.clone(),
            frames_dir,
            candidate_store: Path::new(&id).join(STORE_FILE),
            sketch_present,
        });
        outputs.extend([store_path, motion_path, video_path]);
    }
    manifest.write(&manifest_path)?;
    outputs.push(manifest_path);
    Ok(Outcome {
        outputs,
        ..Default::default()
    })
}

/// Frame indices of files named `{prefix}NNNNNN.pgm` in `dir`, ascending.
fn indexed_files(dir: &Path, prefix: &str) -> Result<Vec<usize>> {
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        let digits = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(".pgm"));
        if let Some(t) = digits.filter(|d| d.len() == 6).and_then(|d| d.parse().ok()) {
            frames.push(t);
        }
    }
    frames.sort_unstable();
    Ok(frames)
}

fn indexed_path(dir: &Path, prefix: &str, t: usize) -> PathBuf {
    dir.join(format!("{prefix}{t:06}.pgm"))
}

fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let (w, h, values) = read_pgm(path)?;
    Ok((w, h, values.into_iter().map(|v| v >= 0.5).collect()))
}

fn train(a: &TrainPriorArgs, config: &PipelineConfig) -> Result<Outcome> {
    if a.store.len() != a.masks.len() {
        return Err(invalid("every --store needs exactly one --masks directory"));
    }
    if a.store.is_empty() && a.scene.is_empty() {
        return Err(invalid("give --store/--masks pairs or --scene directories"));
    }
    let mut samples = Vec::new();
    let mut sources = Vec::new();
    for (store_path, mask_dir) in a.store.iter().zip(&a.masks) {
        let store = read_store(store_path)?;
        let frames = indexed_files(mask_dir, "mask_")?;
        let mut size: Option<(usize, usize)> = None;
        let masks = frames
            .iter()
            .map(|&t| {
                let path = indexed_path(mask_dir, "mask_", t);
                let (w, h, m) = read_mask(&path)?;
                match size {
                    Some(s) if s != (w, h) => Err(Error::DimensionMismatch(format!(
                        "{} is {w}x{h}, earlier masks are {}x{}",
                        path.display(),
                        s.0,
                        s.1
                    ))),
                    _ => {
                        size = Some((w, h));
                        Ok(m)
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let (w, h) = size.ok_or_else(|| Error::Format {
            path: mask_dir.clone(),
            message: "no mask_NNNNNN.pgm files".into(),
        })?;
        let labels = label_candidates(&store.candidates, &frames, &masks, w, h)?;
        samples.extend(store.candidates.iter().map(|c| c.features).zip(labels));
        sources.push(store_path.display().to_string());
    }
    for dir in &a.scene {
        let scene = DiskScene::open(dir, config)?;
        let analysis = analyze_scene(&scene, config)?;
        samples.extend(training_samples(&scene, &analysis)?);
        sources.push(dir.display().to_string());
    }
    let model = train_prior(&samples, &sources.join(";"))?;
    ensure_parent(&a.out)?;
    model.save(&a.out)?;
    let positives = samples.iter().filter(|s| s.1).count();
    Ok(Outcome {
        outputs: vec![a.out.clone()],
        ..Default::default()
    }
    .with("samples", samples.len())
    .with("positives", positives))
}

/// Query motion from a motion CSV, an extracted video directory or a frame
/// directory, median filtered for search.
fn load_query(path: &Path, config: &PipelineConfig) -> Result<GlobalMotionPattern> {
    let raw = if path.is_file() {
        read_pattern_csv(path)?
    } else if path.join(MOTION_FILE).is_file() {
        read_pattern_csv(&path.join(MOTION_FILE))?
    } else {
        global_motion_pattern(&DiskSequence::open_default(path, config)?, config)?
    };
    raw.median_filtered(config.median_window)
}

fn load_prior(path: Option<&Path>) -> Result<Option<PriorModel>> {
    path.map(PriorModel::load).transpose()
}

struct Pruning {
    top_percent: f64,
    pieces: usize,
}

fn pruning(a: &TwoStepArgs, config: &PipelineConfig) -> Result<Option<Pruning>> {
    if !a.two_step {
        if a.top_percent.is_some() || a.pieces.is_some() {
            return Err(invalid("--top-percent and --pieces need --two-step"));
        }
        return Ok(None);
    }
    let p = Pruning {
        top_percent: a.top_percent.unwrap_or(config.top_percent),
        pieces: a.pieces.unwrap_or(config.pieces),
    };
    if !(p.top_percent > 0.0 && p.top_percent <= 100.0) {
        return Err(invalid(format!("top percent {} outside (0, 100]", p.top_percent)));
    }
    if p.pieces == 0 {
        return Err(invalid("pieces must be positive"));
    }
    Ok(Some(p))
}

/// Stored sketches when they were built with `k` pieces, else fresh ones.
fn sketches_for(store: &CandidateStore, k: usize) -> Vec<Option<PaaSketch>> {
    match &store.sketches {
        Some((stored_k, s)) if *stored_k == k => s.clone(),
        _ => sketch_candidates(&store.candidates, k),
    }
}

fn score_store(
    store: &CandidateStore,
    query: &GlobalMotionPattern,
    prior: Option<&PriorModel>,
    pruning: Option<&Pruning>,
) -> Result<Vec<CandidateScore>> {
    let priors = candidate_priors(&store.candidates, prior);
    match pruning {
        None => score_exhaustive(&store.candidates, query, &priors),
        Some(p) => {
            let sketches = sketches_for(store, p.pieces);
            Ok(two_step_scores(&store.candidates, &sketches, query, &priors, p.pieces, p.top_percent)?.scores)
        }
    }
}

fn store_path(observer: &Path) -> PathBuf {
    if observer.is_file() {
        observer.to_path_buf()
    } else {
        observer.join(STORE_FILE)
    }
}

fn score(a: &ScoreArgs, config: &PipelineConfig) -> Result<Outcome> {
    let pruning = pruning(&a.two_step, config)?;
    let query = load_query(&a.query, config)?;
    let store = read_store(&store_path(&a.observer))?;
    let prior = load_prior(a.prior.as_deref())?;
    let scores = score_store(&store, &query, prior.as_ref(), pruning.as_ref())?;
    ensure_parent(&a.out)?;
    std::fs::write(&a.out, scores_to_csv(&store.candidates, &scores))?;
    let exact = scores.iter().filter(|s| s.correlation.is_some()).count();
    Ok(Outcome {
        outputs: vec![a.out.clone()],
        ..Default::default()
    }
    .with("candidates", store.candidates.len())
    .with("exact_evaluations", exact))
}

fn observer_manifest(observer: &Path) -> Result<VideoManifest> {
    let dir = if observer.is_file() {
        observer.parent().unwrap_or(Path::new("."))
    } else {
        observer
    };
    VideoManifest::read(dir.join(VIDEO_FILE))
}

fn map(a: &MapArgs, config: &PipelineConfig) -> Result<Outcome> {
    let store = read_store(&store_path(&a.observer))?;
    let video = observer_manifest(&a.observer)?;
    let rows = read_scores_csv(&a.scores)?;
    if rows.len() != store.candidates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} score rows for {} candidates",
            rows.len(),
            store.candidates.len()
        )));
    }
    for (row, c) in rows.iter().zip(&store.candidates) {
        if (row.begin, row.length) != (c.trajectory.begin, c.trajectory.len()) {
            return Err(Error::Format {
                path: a.scores.clone(),
                message: format!("row {} does not match the observer's candidate", row.index),
            });
        }
    }
    let frames: Vec<usize> = match &a.frames {
        Some(list) => list.clone(),
        None => {
            if a.every == 0 {
                return Err(invalid("--every must be positive"));
            }
            (0..video.frame_count).step_by(a.every).collect()
        }
    };
    if let Some(&t) = frames.iter().find(|&&t| t >= video.frame_count) {
        return Err(invalid(format!("frame {t} outside video of {} frames", video.frame_count)));
    }
    let trajectories: Vec<_> = store.candidates.iter().map(|c| &c.trajectory).collect();
    let values: Vec<f64> = rows.iter().map(|r| r.score.posterior).collect();
    let maps = build_maps(&frames, &trajectories, &values, video.width, video.height, config.radius());
    std::fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::with_capacity(frames.len());
    for (&t, m) in frames.iter().zip(&maps) {
        let path = indexed_path(&a.out, "map_", t);
        m.write_pgm(&path)?;
        outputs.push(path);
    }
    Ok(Outcome {
        outputs,
        ..Default::default()
    })
}

fn read_map(path: &Path) -> Result<TargetnessMap> {
    let (width, height, data) = read_pgm(path)?;
    Ok(TargetnessMap { width, height, data })
}

fn mask(a: &MaskArgs, config: &PipelineConfig) -> Result<Outcome> {
    let threshold = a.threshold.unwrap_or(config.mask_threshold);
    if !threshold.is_finite() {
        return Err(invalid("threshold must be finite"));
    }
    std::fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    for t in indexed_files(&a.maps, "map_")? {
        let map = read_map(&indexed_path(&a.maps, "map_", t))?;
        let path = indexed_path(&a.out, "mask_", t);
        write_mask_pgm(&path, map.width, map.height, &export_mask(&map, threshold))?;
        outputs.push(path);
    }
    Ok(Outcome {
        outputs,
        ..Default::default()
    })
}

fn auc(a: &AucArgs) -> Result<Outcome> {
    let truth_frames = indexed_files(&a.truth, "mask_")?;
    let frames: Vec<usize> = indexed_files(&a.maps, "map_")?
        .into_iter()
        .filter(|t| truth_frames.binary_search(t).is_ok())
        .collect();
    if frames.is_empty() {
        return Err(invalid("no frame has both a map and a truth mask"));
    }
    let mut maps = Vec::with_capacity(frames.len());
    let mut truths = Vec::with_capacity(frames.len());
    for &t in &frames {
        let map = read_map(&indexed_path(&a.maps, "map_", t))?;
        let (w, h, mask) = read_mask(&indexed_path(&a.truth, "mask_", t))?;
        if (w, h) != (map.width, map.height) {
            return Err(Error::DimensionMismatch(format!(
                "frame {t}: map {}x{}, truth {w}x{h}",
                map.width, map.height
            )));
        }
        maps.push(map);
        truths.push(mask);
    }
    let value = maps_auc(&maps, &truths)?;
    Ok(Outcome::default().with("auc", value).with("frames", frames.len()))
}

fn affinity(a: &AffinityArgs, config: &PipelineConfig) -> Result<Outcome> {
    let pruning = pruning(&a.two_step, config)?;
    let manifest = RepositoryManifest::read(&a.repo)?;
    let base = a.repo.parent().unwrap_or(Path::new("."));
    if manifest.videos.is_empty() {
        return Err(Error::EmptyRepository);
    }
    let prior_path = a
        .prior
        .clone()
        .or_else(|| manifest.prior_model.as_ref().map(|p| resolve(base, p)));
    let prior = match a.source {
        SourceArg::Likelihood => None,
        SourceArg::Posterior => Some(
            load_prior(prior_path.as_deref())?
                .ok_or_else(|| invalid("--source posterior needs --prior or a repository prior"))?,
        ),
    };
    let source = match a.source {
        SourceArg::Likelihood => AffinitySource::Likelihood,
        SourceArg::Posterior => AffinitySource::Posterior,
    };
    let mut stores = Vec::with_capacity(manifest.videos.len());
    let mut queries = Vec::with_capacity(manifest.videos.len());
    for v in &manifest.videos {
        let path = resolve(base, &v.candidate_store);
        let dir = path.parent().unwrap_or(base);
        queries.push(read_pattern_csv(&dir.join(MOTION_FILE))?.median_filtered(config.median_window)?);
        stores.push(read_store(&path)?);
    }
    let length_center = mean_candidate_length(
        stores
            .iter()
            .flat_map(|s| s.candidates.iter().map(|c| c.trajectory.len())),
    )?;
    let lengths: Vec<Vec<usize>> = stores.iter().map(|s| lengths(&s.candidates)).collect();
    let n = stores.len();
    // directed[q][p]: video q's wearer searched in video p
    let mut directed = vec![vec![0.0; n]; n];
    for (q, row) in directed.iter_mut().enumerate() {
        for (p, cell) in row.iter_mut().enumerate() {
            if p != q {
                let scores = score_store(&stores[p], &queries[q], prior.as_ref(), pruning.as_ref())?;
                *cell = directed_from_scores(&scores, &lengths[p], length_center, source);
            }
        }
    }
    let ids = manifest.videos.iter().map(|v| v.source_id.clone()).collect();
    let matrix = AffinityMatrix::from_directed(ids, &directed, !a.asymmetric)?;
    ensure_parent(&a.out)?;
    matrix.write_csv(&a.out)?;
    Ok(Outcome {
        outputs: vec![a.out.clone()],
        ..Default::default()
    }
    .with("length_center", length_center))
}

fn lengths(candidates: &[Candidate]) -> Vec<usize> {
    candidates.iter().map(|c| c.trajectory.len()).collect()
}

fn read_affinity(path: &Path) -> Result<AffinityMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut m = AffinityMatrix::from_csv(&text, true)?;
    m.symmetric = (0..m.len()).all(|i| (0..i).all(|j| m.values[i][j] == m.values[j][i]));
    Ok(m)
}

fn position(ids: &[String], id: &str) -> Result<usize> {
    ids.iter()
        .position(|x| x == id)
        .ok_or_else(|| invalid(format!("unknown source id `{id}`")))
}

#[derive(Serialize)]
struct RetrievalOutput {
    query: String,
    ranked: Vec<String>,
    r_precision: Option<f64>,
}

fn retrieve_cmd(a: &RetrieveArgs) -> Result<Outcome> {
    let matrix = read_affinity(&a.affinity)?;
    let q = position(&matrix.ids, &a.query)?;
    let ranked = retrieve(q, &matrix);
    let r_precision = match &a.relevant {
        None => None,
        Some(ids) => {
            let relevant = ids
                .iter()
                .map(|id| position(&matrix.ids, id))
                .collect::<Result<Vec<_>>>()?;
            Some(r_precision(&ranked, &relevant)?)
        }
    };
    let result = RetrievalOutput {
        query: a.query.clone(),
        ranked: ranked.iter().map(|&i| matrix.ids[i].clone()).collect(),
        r_precision,
    };
    let mut outcome = Outcome::default();
    if let Some(out) = &a.out {
        write_json(out, &result)?;
        outcome.outputs.push(out.clone());
    }
    Ok(outcome
        .with("ranked", &result.ranked)
        .with("r_precision", result.r_precision))
}

#[derive(Serialize)]
struct ClusterOutput {
    ids: Vec<String>,
    labels: Vec<usize>,
    exemplars: Vec<String>,
    iterations: usize,
    converged: bool,
}

fn cluster(a: &ClusterArgs) -> Result<Outcome> {
    let matrix = read_affinity(&a.affinity)?;
    let params = PropagationParams {
        preference: a.preference,
        damping: a.damping,
        max_iter: a.max_iter,
        ..Default::default()
    };
    let result = affinity_propagation(&matrix.values, &params)?;
    let out = ClusterOutput {
        labels: result.labels(),
        exemplars: result.exemplars.iter().map(|&e| matrix.ids[e].clone()).collect(),
        ids: matrix.ids,
        iterations: result.iterations,
        converged: result.converged,
    };
    write_json(&a.out, &out)?;
    Ok(Outcome {
        outputs: vec![a.out.clone()],
        ..Default::default()
    }
    .with("groups", out.exemplars.len())
    .with("converged", out.converged))
}

fn synth(a: &SynthArgs, config: &PipelineConfig) -> Result<Outcome> {
    let mut spec = match &a.spec {
        Some(path) => SynthSpec::load(path)?,
        None => SynthSpec::default(),
    };
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    if let Some(v) = a.people {
        spec.people = v;
    }
    if let Some(v) = a.frames {
        spec.frames = v;
    }
    if let Some(v) = a.fps {
        spec.fps = v;
    }
    if let Some(v) = a.noise {
        spec.noise_sigma = v;
    }
    if let Some(v) = a.distractors {
        spec.distractors = v;
    }
    if let Some(sizes) = &a.groups {
        let mut next = 0;
        spec.groups = sizes
            .iter()
            .map(|&s| {
                let g: Vec<usize> = (next..next + s).collect();
                next += s;
                g
            })
            .collect();
        if a.people.is_none() {
            spec.people = next;
        }
    }
    if (spec.width, spec.height) != (config.process_width, config.process_height) {
        return Err(invalid(format!(
            "session size {}x{} differs from the processing size {}x{}",
            spec.width, spec.height, config.process_width, config.process_height
        )));
    }
    let session = generate(&spec, config.min_length)?;
    write_session(&session, &a.out)?;
    Ok(Outcome {
        outputs: vec![a.out.clone()],
        ..Default::default()
    }
    .with("people", spec.people)
    .with("frames", spec.frames))
}

fn bench(a: &BenchArgs, config: &PipelineConfig) -> Result<Outcome> {
    let names: Vec<&str> = if a.variant.is_empty() {
        vec!["c", "c+g", "two-step", "asym"]
    } else {
        a.variant.iter().map(String::as_str).collect()
    };
    let variants = names
        .iter()
        .map(|v| Variant::parse(v, config))
        .collect::<Result<Vec<_>>>()?;
    let scene = DiskScene::open(&a.dir, config)?;
    let analysis = analyze_scene(&scene, config)?;
    let options = BenchOptions {
        prior: load_prior(a.prior.as_deref())?,
        ..Default::default()
    };
    let reports = evaluate_variants(&scene, &analysis, config, &variants, &options)?;
    let outputs = write_report(&reports, &a.out)?;
    let summary: Vec<_> = reports
        .iter()
        .map(|r| {
            serde_json::json!({
                "variant": r.variant_name,
                "mean_auc": r.mean_auc,
                "mean_r_precision": r.mean_r_precision,
                "f_measure": r.clustering.f_measure,
            })
        })
        .collect();
    Ok(Outcome {
        outputs,
        ..Default::default()
    }
    .with("variants", summary))
}
