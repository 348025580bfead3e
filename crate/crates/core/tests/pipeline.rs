use cfaseq::image::rmse;
use cfaseq::pipeline::{
    central_rmse, evaluate, run_pipeline, run_pipeline_frames, simulate, EvalReport, NoiseSetting, PipelineConfig, Stages,
};
use cfaseq::synth::{synthetic_sequence, Scene, DEFAULT_PSF};
use cfaseq::{BayerPattern, Error, Sequence};

fn static_scene(seed: u64, size: usize, frames: usize) -> Sequence {
    let frame = Scene::random(seed, size as f64).render(size, size, 0.0, 0.0, DEFAULT_PSF);
    Sequence::new(vec![frame; frames]).unwrap()
}

fn config(pattern: BayerPattern, denoise: bool, st: bool) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(pattern);
    cfg.stages = Stages { denoise, demosaick_st: st, imaging_chain: false };
    cfg
}

#[test]
fn static_noise_free_refinement_does_not_hurt() {
    for seed in [1, 2] {
        let clean = static_scene(seed, 96, 4);
        let cfa = simulate(&clean, BayerPattern::Grbg, 0.0, 0).unwrap();
        let init = run_pipeline(&cfa, &config(BayerPattern::Grbg, false, false)).unwrap();
        let refined = run_pipeline(&cfa, &config(BayerPattern::Grbg, false, true)).unwrap();
        let (a, b) = (central_rmse(&init, &clean).unwrap(), central_rmse(&refined, &clean).unwrap());
        assert!(b <= a, "seed {seed}: refined {b} vs init {a}");
    }
}

#[test]
fn moving_noisy_sequence_improves_on_init() {
    let clean = synthetic_sequence(9, 64, 64, 5, 1.0);
    let cfa = simulate(&clean, BayerPattern::Bggr, 8.0, 3).unwrap();
    let k = clean.central_index();
    let init = run_pipeline_frames(&cfa, &config(BayerPattern::Bggr, false, false), Some(&[k])).unwrap();
    let full = run_pipeline_frames(&cfa, &config(BayerPattern::Bggr, true, true), Some(&[k])).unwrap();
    let a = rmse(&init.frames[0], &clean[k]).unwrap();
    let b = rmse(&full.frames[0], &clean[k]).unwrap();
    assert!(b < 0.7 * a, "full {b} vs init {a}");
    assert_eq!(full.indices, vec![k]);
    assert!(full.noise_model.is_some() && full.denoised.is_some() && full.init.is_some() && full.green.is_some());
    assert!(init.noise_model.is_none() && init.denoised.is_none() && init.init.is_none());
}

#[test]
fn fixed_noise_mode_skips_estimation() {
    let clean = synthetic_sequence(4, 48, 48, 3, 0.5);
    let cfa = simulate(&clean, BayerPattern::Rggb, 5.0, 1).unwrap();
    let mut cfg = config(BayerPattern::Rggb, true, false);
    cfg.noise = NoiseSetting::Fixed { sigma: 5.0 };
    let out = run_pipeline_frames(&cfa, &cfg, None).unwrap();
    assert!(out.observations.is_none());
    let model = out.noise_model.unwrap();
    for ch in &model.channels {
        for x in [0.0, 50.0, 200.0] {
            assert!((ch.sigma(x) - 5.0).abs() < 1e-12);
        }
    }
    assert_eq!(out.frames.len(), 3);
}

#[test]
fn imaging_chain_maps_to_display_range() {
    let clean = synthetic_sequence(5, 32, 32, 2, 0.5);
    let cfa = simulate(&clean, BayerPattern::Rggb, 0.0, 0).unwrap();
    let mut cfg = config(BayerPattern::Rggb, false, false);
    cfg.stages.imaging_chain = true;
    let out = run_pipeline(&cfa, &cfg).unwrap();
    for f in out.frames() {
        let (lo, hi) = f.min_max();
        assert!(lo >= 0.0 && hi <= 255.0, "{lo} {hi}");
    }
}

#[test]
fn pattern_mismatch_is_rejected() {
    let clean = synthetic_sequence(6, 16, 16, 2, 0.5);
    let cfa = simulate(&clean, BayerPattern::Rggb, 1.0, 0).unwrap();
    let err = run_pipeline(&cfa, &config(BayerPattern::Gbrg, false, false)).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(matches!(run_pipeline(&[], &config(BayerPattern::Rggb, false, false)), Err(Error::EmptySequence)));
}

#[test]
fn config_toml_round_trip() {
    let mut cfg = PipelineConfig::new(BayerPattern::Gbrg);
    cfg.noise = NoiseSetting::Fixed { sigma: 3.5 };
    cfg.stabilizer_c = Some(1.5);
    cfg.demosaick.h = Some(4.0);
    let text = cfg.to_toml();
    assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);

    let minimal = PipelineConfig::from_toml("pattern = \"rggb\"\n").unwrap();
    assert_eq!(minimal, PipelineConfig::new(BayerPattern::Rggb));
    assert!(PipelineConfig::from_toml("pattern = \"rggb\"\nbogus = 1\n").is_err());
    assert!(PipelineConfig::from_toml("pattern = \"rggb\"\ngamma = -1.0\n").is_err());
    assert!(PipelineConfig::from_toml("gamma = 0.5\n").is_err());
}

#[test]
fn simulation_is_seeded() {
    let clean = synthetic_sequence(8, 24, 24, 2, 1.0);
    let a = simulate(&clean, BayerPattern::Rggb, 4.0, 11).unwrap();
    let b = simulate(&clean, BayerPattern::Rggb, 4.0, 11).unwrap();
    let c = simulate(&clean, BayerPattern::Rggb, 4.0, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn evaluation_report() {
    let truth = synthetic_sequence(2, 16, 16, 3, 1.0);
    let shifted = truth.map_frames(|f| f.map(|v| v + 2.0));
    let central = Sequence::new(vec![truth[1].clone()]).unwrap();
    let report = evaluate(
        "seq",
        &[("exact".into(), central), ("offset".into(), shifted)],
        &truth,
    )
    .unwrap();
    assert_eq!(report.rows[0].1[0], 0.0);
    assert!((report.rows[0].1[1] - 2.0).abs() < 1e-12);
    let csv = report.to_csv();
    assert!(csv.contains("sequence,exact,offset\n"));
    assert!(csv.contains("average,0.000000,2.000000"));

    let mut r = EvalReport::new(vec!["a".into()]);
    r.push("x", vec![1.0]).unwrap();
    r.push("y", vec![3.0]).unwrap();
    assert_eq!(r.averages(), vec![2.0]);
    assert!(r.push("z", vec![1.0, 2.0]).is_err());
    assert!(r.to_text().contains("average"));

    let wrong = Sequence::new(vec![truth[0].clone(); 2]).unwrap();
    assert!(central_rmse(&wrong, &truth).is_err());
}
