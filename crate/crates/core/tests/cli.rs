use std::path::Path;
use std::process::{Command, Output};

use tsvad::context::arch::{stu_net, ArchSpec, LayerSpec, Shape};
use tsvad::context::frame_io::save_frms;
use tsvad::context::Frame;
use tsvad::eval::read_score_csv;
use tsvad::hash::HashEncoder;

fn tsvad(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsvad"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = tsvad(dir, args);
    assert!(
        out.status.success(),
        "tsvad {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn exit_code(dir: &Path, args: &[&str]) -> i32 {
    tsvad(dir, args).status.code().expect("exit code")
}

const CFG: [&str; 2] = ["--config", "out/pipeline.json"];

fn with_cfg<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend(CFG);
    v.extend(extra);
    v
}

fn synth(dir: &Path) {
    ok(
        dir,
        &["synth", "--synth.train_videos=6", "--synth.test_videos=3"],
    );
}

fn report_auc(dir: &Path, stream: &str) -> f64 {
    let text = std::fs::read_to_string(dir.join("out/report.csv")).unwrap();
    text.lines()
        .find(|l| l.starts_with(&format!("{stream},micro,")))
        .and_then(|l| l.split(',').nth(3))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn full_pipeline_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    ok(d, &with_cfg("train-hash", &[]));
    ok(d, &with_cfg("build-kb", &[]));
    ok(d, &with_cfg("score-kr", &[]));
    let msg = ok(d, &with_cfg("select-window", &[]));
    assert!(msg.contains("k ="), "{msg}");
    ok(d, &with_cfg("score-cr", &["--mle.window=32"]));
    let msg = ok(d, &with_cfg("fuse-eval", &[]));
    assert!(msg.contains("fused"), "{msg}");
    for stream in ["cr", "kr", "fused"] {
        let auc = report_auc(d, stream);
        assert!((0.0..=1.0).contains(&auc));
    }
    assert!(report_auc(d, "cr") > 0.8);
    for f in [
        "loss_trace.csv",
        "kb_census.csv",
        "window_curve.csv",
        "fused_scores.csv",
        "train-hash.config.json",
    ] {
        assert!(d.join("out").join(f).exists(), "{f} missing");
    }
}

#[test]
fn zero_learning_rate_keeps_initial_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    ok(
        d,
        &with_cfg("train-hash", &["--train.learning_rate=0", "--hash.seed=5"]),
    );
    let saved = HashEncoder::load(&d.join("out/encoder.ilsh")).unwrap();
    let mut init = HashEncoder::init(64, 4, 8, 5).unwrap();
    init.round_to_f32();
    assert_eq!(saved.to_bytes(), init.to_bytes());
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);

    assert_eq!(
        exit_code(
            d,
            &with_cfg("train-hash", &["--paths.train_features=missing.feat"])
        ),
        2
    );
    assert_eq!(
        exit_code(d, &with_cfg("train-hash", &["--hash.bogus=1"])),
        2
    );
    assert_eq!(exit_code(d, &with_cfg("score-cr", &[])), 2);

    ok(d, &with_cfg("train-hash", &["--train.epochs=2"]));
    ok(d, &with_cfg("build-kb", &[]));
    ok(
        d,
        &with_cfg(
            "train-hash",
            &[
                "--train.epochs=2",
                "--hash.seed=9",
                "--paths.encoder=out/other.ilsh",
            ],
        ),
    );
    assert_eq!(
        exit_code(
            d,
            &with_cfg("score-kr", &["--paths.encoder=out/other.ilsh"])
        ),
        3
    );

    ok(d, &with_cfg("score-kr", &[]));
    ok(d, &with_cfg("score-cr", &["--mle.window=32"]));
    assert_eq!(
        exit_code(d, &with_cfg("fuse-eval", &["--paths.labels=null"])),
        4
    );

    std::fs::write(d.join("garbage.ilsh"), b"not an encoder").unwrap();
    assert_eq!(
        exit_code(d, &with_cfg("build-kb", &["--paths.encoder=garbage.ilsh"])),
        2
    );
}

#[test]
fn check_shapes_bundled_corrupted_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let msg = ok(d, &["check-shapes"]);
    assert!(msg.contains("all 16 reference shapes match"), "{msg}");
    assert!(d.join("out/shapes.csv").exists());

    ok(d, &["check-shapes", "--emit", "net.json"]);
    let emitted: ArchSpec =
        serde_json::from_str(&std::fs::read_to_string(d.join("net.json")).unwrap()).unwrap();
    assert_eq!(emitted, stu_net());
    let mut broken = emitted;
    broken.layers[0] = broken.layers[0].clone().stride(0, 0);
    std::fs::write(
        d.join("broken.json"),
        serde_json::to_string(&broken).unwrap(),
    )
    .unwrap();
    let out = tsvad(d, &["check-shapes", "--paths.arch=broken.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("#0"));

    let input = Shape::new(3, 8, 16, 16);
    for layers in [vec![], vec![LayerSpec::conv(3, 1, 1)]] {
        let spec = ArchSpec {
            name: "identity".into(),
            input,
            layers,
        };
        std::fs::write(d.join("id.json"), serde_json::to_string(&spec).unwrap()).unwrap();
        let msg = ok(d, &["check-shapes", "--paths.arch=id.json"]);
        assert!(
            msg.trim_end().ends_with(&format!("output {input}")),
            "{msg}"
        );
    }
}

#[test]
fn static_video_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("frames")).unwrap();
    let frames = vec![Frame::filled(32, 32, 1, 0.3).unwrap(); 10];
    save_frms(&d.join("frames/still.frms"), &frames).unwrap();
    ok(
        d,
        &[
            "score-cr",
            "--paths.test_frames=frames",
            "--paths.cr_scores=cr.csv",
            "--mle.window=8",
        ],
    );
    let series = read_score_csv(&d.join("cr.csv")).unwrap();
    assert_eq!(series.len(), 1);
    assert_eq!(series[0].scores, vec![0.0; 10]);
}

#[test]
fn fusing_a_stream_with_itself_keeps_its_auc() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    ok(d, &with_cfg("score-cr", &["--mle.window=32"]));
    std::fs::copy(d.join("out/cr_scores.csv"), d.join("copy.csv")).unwrap();
    ok(d, &with_cfg("fuse-eval", &["--paths.kr_scores=copy.csv"]));
    assert_eq!(report_auc(d, "fused"), report_auc(d, "cr"));
    assert_eq!(report_auc(d, "kr"), report_auc(d, "cr"));
}
