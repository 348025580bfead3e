use std::path::Path;
use std::process::{Command, Output};

use cfaseq::flow::FlowField;
use cfaseq::netpbm::read_frames;
use cfaseq::noise::{parse_observations_csv, NoiseModel};
use cfaseq::pipeline::PipelineConfig;
use cfaseq::BayerPattern;

fn cfaseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfaseq")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cfaseq(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn config_dump_round_trips() {
    let out = ok(&["config", "--dump", "--pattern", "gbrg"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(PipelineConfig::from_toml(&text).unwrap(), PipelineConfig::new(BayerPattern::Gbrg));
    for section in ["[stages]", "[flow]", "[denoise]", "[demosaick]", "[noise_estimation]"] {
        assert!(text.contains(section), "missing {section}");
    }
}

#[test]
fn end_to_end_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let (clean, noisy, out, local) = (tmp.path().join("clean"), tmp.path().join("noisy"), tmp.path().join("full"), tmp.path().join("local"));

    ok(&["synthesize", "--out", p(&clean), "--width", "64", "--height", "64", "--frames", "4", "--seed", "3"]);
    assert_eq!(read_frames(&clean).unwrap().len(), 4);
    assert!(clean.join("frame_0000.ppm").exists());

    ok(&["simulate", "--in", p(&clean), "--sigma", "6", "--pattern", "GRBG", "--seed", "9", "--out", p(&noisy)]);
    let cfa = read_frames(&noisy).unwrap();
    assert_eq!((cfa.len(), cfa[0].channels()), (4, 1));
    assert!(noisy.join("frame_0003.pgm").exists());

    let model = tmp.path().join("model.txt");
    let csv = tmp.path().join("curve.csv");
    ok(&["estimate-noise", "--in", p(&noisy), "--pattern", "GRBG", "--bins", "8", "--out", p(&model), "--csv", p(&csv)]);
    let m = NoiseModel::load(&model).unwrap();
    assert_eq!(m.channels.len(), 4);
    for ch in &m.channels {
        let s = ch.sigma(128.0);
        assert!((4.0..9.0).contains(&s), "{s}");
    }
    assert_eq!(parse_observations_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap().len(), 4);

    let png = tmp.path().join("curve.png");
    ok(&["plot-noise", "--csv", p(&csv), "--model", p(&model), "--out", p(&png)]);
    assert_eq!(&std::fs::read(&png).unwrap()[..4], b"\x89PNG");

    ok(&[
        "--workers", "2", "pipeline", "--in", p(&noisy), "--pattern", "GRBG", "--frames", "1,2", "--out", p(&out),
        "--dump-intermediates",
    ]);
    assert!(out.join("frame_0001.ppm").exists() && out.join("frame_0002.ppm").exists());
    assert!(!out.join("frame_0000.ppm").exists());
    let dump = out.join("intermediates");
    for f in ["config.toml", "noise_model.txt", "noise_curve.csv", "init/frame_0000.ppm", "green/frame_0003.pgm"] {
        assert!(dump.join(f).exists(), "missing {f}");
    }
    assert!(!read_frames(dump.join("denoised")).unwrap().is_empty());

    ok(&[
        "pipeline", "--in", p(&noisy), "--pattern", "GRBG", "--set", "stages.demosaick_st=false", "--frames", "1",
        "--out", p(&local),
    ]);

    let report = tmp.path().join("report.csv");
    let full_central = tmp.path().join("full_central");
    std::fs::create_dir(&full_central).unwrap();
    std::fs::copy(out.join("frame_0002.ppm"), full_central.join("frame_0000.ppm")).unwrap();
    let out = ok(&["evaluate", "--variants", p(&full_central), p(&clean), "--truth", p(&clean), "--out", p(&report)]);
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("# central-frame RMSE"));
    assert!(text.contains("sequence,full_central,clean"));
    let avg: Vec<f64> = text.lines().last().unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(avg[1], 0.0);
    assert!(avg[0] > 0.0 && avg[0] < 6.0, "{avg:?}");
    assert!(String::from_utf8(out.stdout).unwrap().contains("average"));
}

#[test]
fn flow_subcommand_writes_flo() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = tmp.path().join("f");
    ok(&["synthesize", "--out", p(&frames), "--width", "48", "--height", "48", "--frames", "2", "--seed", "1"]);
    let gray = tmp.path().join("g");
    ok(&["simulate", "--in", p(&frames), "--sigma", "0", "--out", p(&gray)]);
    let flo = tmp.path().join("x.flo");
    ok(&["flow", "--src", p(&gray.join("frame_0000.pgm")), "--dst", p(&gray.join("frame_0001.pgm")), "--out", p(&flo)]);
    let f = FlowField::read_flo(&flo).unwrap();
    assert_eq!((f.width(), f.height()), (48, 48));
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let frames = tmp.path().join("f");
    ok(&["synthesize", "--out", p(&frames), "--width", "32", "--height", "32", "--frames", "2"]);
    let cfa = tmp.path().join("c");
    ok(&["simulate", "--in", p(&frames), "--sigma", "2", "--pattern", "BGGR", "--out", p(&cfa)]);
    let cfg = tmp.path().join("cfg.toml");
    std::fs::write(&cfg, "pattern = \"BGGR\"\n[stages]\ndenoise = false\ndemosaick_st = false\n").unwrap();
    let out = tmp.path().join("o");
    ok(&["pipeline", "--in", p(&cfa), "--config", p(&cfg), "--set", "gamma=0.8", "--out", p(&out), "--dump-intermediates"]);
    let effective = PipelineConfig::load(out.join("intermediates/config.toml")).unwrap();
    assert_eq!(effective.gamma, 0.8);
    assert!(!effective.stages.denoise);
    assert!(!out.join("intermediates/noise_model.txt").exists());
    assert_eq!(read_frames(&out).unwrap().len(), 2);
}

#[test]
fn failures_exit_nonzero_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["pipeline".into(), "--in".into(), p(tmp.path()).into(), "--out".into(), p(&tmp.path().join("o")).into()],
        vec!["simulate".into(), "--in".into(), p(&tmp.path().join("missing")).into(), "--sigma".into(), "1".into(), "--out".into(), "x".into()],
        vec!["config".into(), "--dump".into(), "--pattern".into(), "XYZW".into()],
        vec![
            "pipeline".into(), "--in".into(), p(tmp.path()).into(), "--pattern".into(), "RGGB".into(), "--set".into(),
            "bogus".into(), "--out".into(), "o".into(),
        ],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = cfaseq(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty(), "{args:?} printed nothing");
    }
    let out = cfaseq(&["pipeline", "--in", p(tmp.path()), "--out", "o"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}
