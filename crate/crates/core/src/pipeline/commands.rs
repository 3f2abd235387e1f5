use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::config::PipelineConfig;
use super::features::{read_features, write_features};
use crate::binio;
use crate::context::arch::{
    compare_levels, propagate_shapes, stu_net, stu_net_reference, ArchSpec,
};
use crate::context::frame_io::{list_videos, load_video, save_frms, video_len};
use crate::context::{
    score_video, select_window, simulate_anomalous_video, ExternalPredictions, Frame,
    FramePredictor, PersistencePredictor, ScoringOptions, SimulationConfig,
};
use crate::error::{Error, Result};
use crate::eval::{
    align_to_frames, fuse, macro_auc, micro_auc, postprocess, read_label_csv, read_score_csv,
    roc_auc, score_gap, series_score_gap, write_label_csv, write_report_csv, write_score_csv,
    ReportRow, ScoreSeries,
};
use crate::hash::{FeatureVector, HashEncoder};
use crate::kb::KnowledgeBase;
use crate::seed;
use crate::synth::{blob_video, BlobVideoConfig, ClusterConfig, ClusterWorld};
use crate::train::{train, write_trace_csv};

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::invalid(format!("paths.{key} is not set")))
}

/// Writes the resolved configuration next to the command's outputs.
fn echo_config(cfg: &PipelineConfig, command: &str) -> Result<()> {
    let path = cfg.paths.out_dir.join(format!("{command}.config.json"));
    binio::write_file(&path, cfg.to_json().as_bytes())
}

fn write_csv_rows(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    binio::write_file(path, &bytes)
}

/// Trains the hash encoder on the training features.
pub fn train_hash(cfg: &PipelineConfig) -> Result<String> {
    let features = read_features(require(&cfg.paths.train_features, "train_features")?)?;
    let out = require(&cfg.paths.encoder, "encoder")?;
    let dim = features
        .first()
        .map(|f| f.values.len())
        .ok_or_else(|| Error::invalid("training feature file is empty"))?;
    if let Some(d) = cfg.hash.dim {
        if d != dim {
            return Err(Error::invalid(format!(
                "hash.dim is {d} but features have {dim} dimensions"
            )));
        }
    }
    let mut encoder = HashEncoder::init(dim, cfg.hash.tables, cfg.hash.code_len, cfg.hash.seed)?;
    encoder.round_to_f32();
    info!("training on {} snippets", features.len());
    let outcome = train(&encoder, &features, &cfg.train)?;
    let mut trained = outcome.encoder;
    trained.round_to_f32();
    trained.save(out)?;
    let mut trace = Vec::new();
    write_trace_csv(&outcome.trace, &mut trace)?;
    binio::write_file(&cfg.paths.out_dir.join("loss_trace.csv"), &trace)?;
    echo_config(cfg, "train-hash")?;
    let first = outcome.trace.first().map_or(f64::NAN, |t| t.mean_total);
    let last = outcome.trace.last().map_or(f64::NAN, |t| t.mean_total);
    Ok(format!(
        "encoder written to {} (loss {first:.6} -> {last:.6} over {} epochs)",
        out.display(),
        cfg.train.epochs
    ))
}

/// Hashes every training snippet into the knowledge base.
pub fn build_kb(cfg: &PipelineConfig) -> Result<String> {
    let encoder = HashEncoder::load(require(&cfg.paths.encoder, "encoder")?)?;
    let features = read_features(require(&cfg.paths.train_features, "train_features")?)?;
    if features.is_empty() {
        return Err(Error::invalid("training feature file is empty"));
    }
    let out = require(&cfg.paths.kb, "kb")?;
    let kb = KnowledgeBase::build(&encoder, &features)?;
    kb.save(out)?;
    let census = kb.tables().iter().enumerate().flat_map(|(t, table)| {
        table.iter().map(move |(key, bucket)| {
            vec![t.to_string(), key.to_string(), bucket.cnt().to_string()]
        })
    });
    write_csv_rows(
        &cfg.paths.out_dir.join("kb_census.csv"),
        &["table", "key", "count"],
        census,
    )?;
    echo_config(cfg, "build-kb")?;
    let buckets: usize = kb.tables().iter().map(|t| t.len()).sum();
    Ok(format!(
        "knowledge base written to {} ({} snippets, {buckets} buckets in {} tables)",
        out.display(),
        features.len(),
        kb.num_tables()
    ))
}

/// Frame count of each test video: from the frames directory, else the
/// label file, else the last snippet anchor.
fn video_lengths(cfg: &PipelineConfig) -> Result<BTreeMap<String, usize>> {
    if let Some(dir) = &cfg.paths.test_frames {
        return list_videos(dir)?
            .into_iter()
            .map(|(id, p)| Ok((id, video_len(&p)?)))
            .collect();
    }
    if let Some(labels) = &cfg.paths.labels {
        return Ok(read_label_csv(labels)?
            .into_iter()
            .map(|(k, v)| (k, v.len()))
            .collect());
    }
    Ok(BTreeMap::new())
}

fn group_features(features: &[FeatureVector]) -> BTreeMap<&str, Vec<&FeatureVector>> {
    let mut by_video: BTreeMap<&str, Vec<&FeatureVector>> = BTreeMap::new();
    for f in features {
        by_video.entry(&f.video_id).or_default().push(f);
    }
    for v in by_video.values_mut() {
        v.sort_by_key(|f| f.frame_index);
    }
    by_video
}

/// Knowledge-retrieval scores, expanded from snippet anchors to frames.
pub fn score_kr(cfg: &PipelineConfig) -> Result<String> {
    let encoder = HashEncoder::load(require(&cfg.paths.encoder, "encoder")?)?;
    let kb = KnowledgeBase::load(require(&cfg.paths.kb, "kb")?)?;
    let features = read_features(require(&cfg.paths.test_features, "test_features")?)?;
    let out = require(&cfg.paths.kr_scores, "kr_scores")?;
    let lengths = video_lengths(cfg)?;
    let mut series = Vec::new();
    let mut misses = 0usize;
    for (video, snippets) in group_features(&features) {
        let mut anchors = Vec::with_capacity(snippets.len());
        for f in snippets {
            let r = kb.retrieve_score(&encoder, f)?;
            if r.score == kb.p_max() {
                misses += 1;
            }
            anchors.push((f.frame_index, r.score));
        }
        let len = match lengths.get(video) {
            Some(&n) => n,
            None => {
                if !lengths.is_empty() {
                    warn!("no frame count for video {video}; using its last anchor");
                }
                anchors.last().unwrap().0 as usize
            }
        };
        series.push(align_to_frames(video, &anchors, len)?);
    }
    write_score_csv(out, &series)?;
    echo_config(cfg, "score-kr")?;
    Ok(format!(
        "{} snippets scored ({misses} missed every table), {} videos written to {}",
        features.len(),
        series.len(),
        out.display()
    ))
}

fn scoring_options(cfg: &PipelineConfig, windows: Vec<usize>) -> ScoringOptions {
    ScoringOptions {
        windows,
        lambda_l1: cfg.mle.lambda_l1,
        mode: cfg.mle.mode,
        rate: cfg.rates.cr_rate,
    }
}

/// Context-recovery scores with the configured window.
pub fn score_cr(cfg: &PipelineConfig) -> Result<String> {
    let k = cfg
        .mle
        .window
        .ok_or_else(|| Error::invalid("mle.window is not set (run select-window to choose one)"))?;
    let videos = list_videos(require(&cfg.paths.test_frames, "test_frames")?)?;
    let out = require(&cfg.paths.cr_scores, "cr_scores")?;
    let predictions: BTreeMap<String, PathBuf> = match &cfg.paths.predictions {
        Some(dir) => list_videos(dir)?.into_iter().collect(),
        None => BTreeMap::new(),
    };
    let opts = scoring_options(cfg, vec![k]);
    let mut series = Vec::with_capacity(videos.len());
    for (id, path) in &videos {
        let frames = load_video(path)?;
        let external;
        let predictor: &dyn FramePredictor = if cfg.paths.predictions.is_some() {
            let p = predictions
                .get(id)
                .ok_or_else(|| Error::invalid(format!("no predictions for video {id}")))?;
            external = ExternalPredictions::new(load_video(p)?)?;
            &external
        } else {
            &PersistencePredictor
        };
        let scores = score_video(id, &frames, predictor, &opts)?;
        series.push(scores.mle.into_iter().next().unwrap());
    }
    write_score_csv(out, &series)?;
    echo_config(cfg, "score-cr")?;
    Ok(format!(
        "{} videos scored with k = {k}, written to {}",
        series.len(),
        out.display()
    ))
}

fn load_videos(dir: &Path) -> Result<Vec<(String, Vec<Frame>)>> {
    list_videos(dir)?
        .into_iter()
        .map(|(id, p)| Ok((id, load_video(&p)?)))
        .collect()
}

/// Chooses the window size on pseudo-anomalies simulated from training videos.
pub fn select_window_cmd(cfg: &PipelineConfig) -> Result<String> {
    let videos = load_videos(require(&cfg.paths.train_frames, "train_frames")?)?;
    let opts = scoring_options(cfg, cfg.mle.windows.clone());
    let sel = select_window(&videos, &PersistencePredictor, &opts, &cfg.simulation)?;
    let rows = sel
        .curve
        .iter()
        .map(|(k, auc)| vec![k.to_string(), auc.to_string()]);
    write_csv_rows(
        &cfg.paths.out_dir.join("window_curve.csv"),
        &["k", "micro_auc"],
        rows,
    )?;
    echo_config(cfg, "select-window")?;
    let mut msg = String::new();
    for (k, auc) in &sel.curve {
        let _ = writeln!(msg, "k = {k:>4}  micro-AUC {auc:.4}");
    }
    let _ = write!(
        msg,
        "selected k = {} (set --mle.window={})",
        sel.chosen, sel.chosen
    );
    Ok(msg)
}

fn attach_labels(
    series: Vec<ScoreSeries>,
    labels: &BTreeMap<String, Vec<u8>>,
    stream: &str,
) -> Result<Vec<ScoreSeries>> {
    series
        .into_iter()
        .map(|s| {
            let l = labels.get(&s.video_id).ok_or_else(|| {
                Error::UndefinedMetric(format!("no labels for video {}", s.video_id))
            })?;
            if l.len() != s.len() {
                return Err(Error::invalid(format!(
                    "{stream} scores for video {} have {} frames, labels have {}",
                    s.video_id,
                    s.len(),
                    l.len()
                )));
            }
            ScoreSeries::new(s.video_id, s.scores, Some(l.clone()))
        })
        .collect()
}

fn report_rows(stream: &str, series: &[ScoreSeries]) -> Result<Vec<ReportRow>> {
    let row = |scope: &str, video: &str, auc, gap| ReportRow {
        stream: stream.to_string(),
        scope: scope.to_string(),
        video_id: video.to_string(),
        auc,
        score_gap: gap,
    };
    let macro_ = macro_auc(series)?;
    for v in macro_.excluded() {
        warn!("{stream}: video {v} has a single class and is left out of the macro AUC");
    }
    let mut rows = vec![
        row(
            "micro",
            "",
            Some(micro_auc(series)?),
            Some(series_score_gap(series)?),
        ),
        row("macro", "", Some(macro_.value), None),
    ];
    for s in series {
        let labels = s.labels.as_deref().unwrap();
        rows.push(row(
            "video",
            &s.video_id,
            roc_auc(&s.scores, labels).ok(),
            score_gap(&s.scores, labels).ok(),
        ));
    }
    Ok(rows)
}

/// Normalizes, smooths and fuses both streams and reports AUC per stream.
pub fn fuse_eval(cfg: &PipelineConfig) -> Result<String> {
    cfg.fusion.validate()?;
    let labels_path = cfg.paths.labels.as_deref().ok_or_else(|| {
        Error::UndefinedMetric("no label file (paths.labels) to evaluate against".into())
    })?;
    let labels = read_label_csv(labels_path)?;
    let cr = read_score_csv(require(&cfg.paths.cr_scores, "cr_scores")?)?;
    let kr = read_score_csv(require(&cfg.paths.kr_scores, "kr_scores")?)?;
    let ids = |s: &[ScoreSeries]| s.iter().map(|x| x.video_id.clone()).collect::<Vec<_>>();
    if ids(&cr) != ids(&kr) {
        return Err(Error::invalid(
            "context and knowledge score files cover different videos",
        ));
    }
    let sigma = cfg.smoothing.sigma;
    let prep = |s: Vec<ScoreSeries>, stream: &str| -> Result<Vec<ScoreSeries>> {
        let s = s
            .iter()
            .map(|x| postprocess(x, sigma))
            .collect::<Result<Vec<_>>>()?;
        attach_labels(s, &labels, stream)
    };
    let cr = prep(cr, "cr")?;
    let kr = prep(kr, "kr")?;
    let fused = cr
        .iter()
        .zip(&kr)
        .map(|(c, k)| fuse(c, k, cfg.fusion))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = report_rows("cr", &cr)?;
    rows.extend(report_rows("kr", &kr)?);
    rows.extend(report_rows("fused", &fused)?);
    write_report_csv(&cfg.paths.out_dir.join("report.csv"), &rows)?;
    write_score_csv(&cfg.paths.out_dir.join("fused_scores.csv"), &fused)?;
    echo_config(cfg, "fuse-eval")?;
    let mut msg = String::new();
    for r in rows.iter().filter(|r| r.scope != "video") {
        let _ = writeln!(
            msg,
            "{:<6} {:<6} AUC {:.4}",
            r.stream,
            r.scope,
            r.auc.unwrap()
        );
    }
    Ok(msg.trim_end().to_string())
}

/// Propagates shapes through an architecture file, or the bundled network.
pub fn check_shapes(cfg: &PipelineConfig) -> Result<String> {
    let (spec, bundled) = match &cfg.paths.arch {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let spec: ArchSpec = serde_json::from_str(&text).map_err(|e| {
                Error::format(p.display().to_string(), e.column() as u64, e.to_string())
            })?;
            (spec, false)
        }
        None => (stu_net(), true),
    };
    let shapes = propagate_shapes(&spec)?;
    let mut msg = format!("{} input {}\n", spec.name, spec.input);
    for s in &shapes {
        if s.label.is_some() {
            let _ = writeln!(msg, "{:<24} {}", s.name, s.output);
        }
    }
    let rows = shapes.iter().map(|s| {
        let o = s.output;
        vec![
            s.name.clone(),
            serde_json::to_value(s.kind)
                .unwrap()
                .as_str()
                .unwrap()
                .to_string(),
            o.c.to_string(),
            o.t.to_string(),
            o.h.to_string(),
            o.w.to_string(),
        ]
    });
    write_csv_rows(
        &cfg.paths.out_dir.join("shapes.csv"),
        &["layer", "kind", "c", "t", "h", "w"],
        rows,
    )?;
    echo_config(cfg, "check-shapes")?;
    if bundled {
        let mismatches = compare_levels(&shapes, &stu_net_reference());
        if let Some((label, want, got)) = mismatches.first() {
            return Err(Error::Spec {
                layer: label.clone(),
                message: format!("expected {want}, got {got:?}"),
            });
        }
        let _ = write!(
            msg,
            "all {} reference shapes match",
            stu_net_reference().len()
        );
    } else {
        let _ = write!(
            msg,
            "output {}",
            shapes.last().map_or(spec.input, |s| s.output)
        );
    }
    Ok(msg)
}

/// Writes the bundled network description as JSON.
pub fn emit_arch(path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&stu_net()).expect("spec serializes");
    text.push('\n');
    binio::write_file(path, text.as_bytes())
}

/// Writes pseudo-anomalous copies of the training videos plus their labels.
pub fn simulate(cfg: &PipelineConfig) -> Result<String> {
    let videos = load_videos(require(&cfg.paths.train_frames, "train_frames")?)?;
    let dir = cfg.paths.out_dir.join("simulated");
    let mut labels = BTreeMap::new();
    for (i, (id, frames)) in videos.iter().enumerate() {
        let vcfg = SimulationConfig {
            seed: seed::derive(cfg.simulation.seed, i as u64),
            ..cfg.simulation.clone()
        };
        let (out, l) = simulate_anomalous_video(frames, &vcfg)?;
        save_frms(&dir.join(format!("{id}.frms")), &out)?;
        labels.insert(id.clone(), l);
    }
    write_label_csv(&cfg.paths.out_dir.join("simulated_labels.csv"), &labels)?;
    echo_config(cfg, "simulate")?;
    let positives: usize = labels.values().flatten().map(|&l| l as usize).sum();
    Ok(format!(
        "{} videos simulated into {} ({positives} pseudo-anomalous frames)",
        labels.len(),
        dir.display()
    ))
}

/// Writes a small self-consistent toy dataset and a config that points at it.
pub fn synth(cfg: &PipelineConfig) -> Result<String> {
    let p = &cfg.synth;
    if p.frames < 8 || p.frame_size < 16 || p.train_videos == 0 || p.test_videos == 0 {
        return Err(Error::invalid(
            "synth needs >= 8 frames, frame_size >= 16 and at least one video per split",
        ));
    }
    let out = &cfg.paths.out_dir;
    let video_cfg = BlobVideoConfig {
        size: p.frame_size,
        frames: p.frames,
        ..Default::default()
    };
    let world = ClusterWorld::new(
        ClusterConfig {
            dim: p.feature_dim,
            ..Default::default()
        },
        seed::derive(p.seed, 1),
    );
    let stride = cfg.rates.kr_rate as u64;
    let anchors: Vec<u64> = (1..=p.frames as u64)
        .map(|j| j * stride)
        .filter(|&a| a >= 8 && a <= p.frames as u64)
        .collect();
    if anchors.is_empty() {
        return Err(Error::invalid("no snippet anchors fit in the video length"));
    }
    let mut labels = BTreeMap::new();
    for (split, count, anomalous) in [
        ("train", p.train_videos, false),
        ("test", p.test_videos, true),
    ] {
        let mut features = Vec::new();
        for i in 0..count {
            let id = format!("{split}{i:03}");
            let vseed = seed::derive(p.seed, 1000 + i as u64 + if anomalous { 500 } else { 0 });
            let (frames, frame_labels) = blob_video(&video_cfg, anomalous, vseed);
            save_frms(
                &out.join("frames").join(split).join(format!("{id}.frms")),
                &frames,
            )?;
            let snippet_labels: Vec<u8> = anchors
                .iter()
                .map(|&a| frame_labels[a as usize - 1])
                .collect();
            features.extend(world.video_features(
                &id,
                i % 3,
                &anchors,
                &snippet_labels,
                seed::derive(vseed, 7),
            ));
            if anomalous {
                labels.insert(id, frame_labels);
            }
        }
        write_features(&out.join(format!("{split}.feat")), &features)?;
    }
    write_label_csv(&out.join("labels.csv"), &labels)?;

    let mut generated = cfg.clone();
    let paths = &mut generated.paths;
    paths.train_features = Some(out.join("train.feat"));
    paths.test_features = Some(out.join("test.feat"));
    paths.train_frames = Some(out.join("frames").join("train"));
    paths.test_frames = Some(out.join("frames").join("test"));
    paths.labels = Some(out.join("labels.csv"));
    paths.encoder = Some(out.join("encoder.ilsh"));
    paths.kb = Some(out.join("knowledge.kb"));
    paths.cr_scores = Some(out.join("cr_scores.csv"));
    paths.kr_scores = Some(out.join("kr_scores.csv"));
    generated.mle.windows.retain(|&k| k <= p.frame_size);
    if generated.mle.windows.is_empty() {
        generated.mle.windows = vec![p.frame_size];
    }
    // short codes suit a dataset of a few hundred snippets
    generated.hash.tables = 4;
    generated.hash.code_len = 8;
    generated.train.epochs = 30;
    generated.simulation.nseg = (p.frames / 6).max(1);
    generated.simulation.ratio = 0.2;
    generated.validate()?;
    let config_path = out.join("pipeline.json");
    binio::write_file(&config_path, generated.to_json().as_bytes())?;
    Ok(format!(
        "toy dataset written to {} ({} train / {} test videos); run the pipeline with --config {}",
        out.display(),
        p.train_videos,
        p.test_videos,
        config_path.display()
    ))
}
