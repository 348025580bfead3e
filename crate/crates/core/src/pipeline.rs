//! End-to-end chain, simulation of noisy CFA sequences and RMSE reports.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cfa::{cfa_to_quad, mosaic, quad_to_cfa, BayerPattern, CfaImage, QuadImage, QUAD_G1};
use crate::color::{gamma_correct, gray_world_wb};
use crate::demosaic::{demosaick_sequence, directional_init, Bandwidth, InterpConfig};
use crate::denoise::{denoise_frame, DenoiseParams};
use crate::error::{Error, Result};
use crate::flow::{FlowParams, RegistrationKind};
use crate::image::{rmse, Image, Sequence};
use crate::noise::{
    build_stabilizers, estimate_model, stabilize_channels, ChannelModel, NoiseEstimationParams, NoiseModel,
    NoiseObservation,
};
use crate::synth::add_noise;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    /// CFA denoising before demosaicking.
    pub denoise: bool,
    /// Spatio-temporal refinement of the directional demosaicking.
    pub demosaick_st: bool,
    /// Gray-world white balance and gamma on the output.
    pub imaging_chain: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self {
            denoise: true,
            demosaick_st: true,
            imaging_chain: false,
        }
    }
}

/// Where the noise curve comes from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSetting {
    /// Estimated from the sequence itself.
    #[default]
    Auto,
    /// Signal-independent noise of known std.
    Fixed { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemosaickSettings {
    pub side: usize,
    pub k: usize,
    pub search_radius: usize,
    pub stride: usize,
    /// Explicit similarity bandwidth; overrides the two rules below.
    pub h: Option<f64>,
    /// After denoising, `h = 2 * residual_sigma`.
    pub residual_sigma: f64,
    /// Without denoising, `h = noise_factor * σ(patch mean)` from the noise curve.
    pub noise_factor: f64,
}

impl Default for DemosaickSettings {
    fn default() -> Self {
        let d = InterpConfig::default();
        Self {
            side: d.side,
            k: d.k,
            search_radius: d.search_radius,
            stride: d.stride,
            h: None,
            residual_sigma: 1.0,
            noise_factor: 2.0,
        }
    }
}

impl DemosaickSettings {
    fn interp_config(&self, denoised: bool, green: Option<&ChannelModel>) -> Result<InterpConfig> {
        let h = match (self.h, denoised, green) {
            (Some(h), _, _) => Bandwidth::Fixed(h),
            (None, true, _) => Bandwidth::Fixed(2.0 * self.residual_sigma),
            (None, false, Some(m)) => Bandwidth::NoiseCurve {
                model: m.clone(),
                factor: self.noise_factor,
            },
            (None, false, None) => return Err(Error::Config("no noise curve to derive the demosaicking bandwidth".into())),
        };
        let cfg = InterpConfig {
            side: self.side,
            k: self.k,
            search_radius: self.search_radius,
            stride: self.stride,
            h,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Full configuration of [`run_pipeline`]. The directional demosaicking is
/// always run; `stages` toggles the optional ones around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub pattern: BayerPattern,
    #[serde(default)]
    pub stages: Stages,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Seed of the simulated noise.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseSetting,
    #[serde(default)]
    pub noise_estimation: NoiseEstimationParams,
    /// Amplitude of the stabilizing transform; by default matched to the
    /// classical Anscombe range. The stabilized noise std equals it, and it
    /// replaces `denoise.sigma`.
    #[serde(default)]
    pub stabilizer_c: Option<f64>,
    #[serde(default)]
    pub registration: RegistrationKind,
    #[serde(default)]
    pub flow: FlowParams,
    #[serde(default)]
    pub denoise: DenoiseParams,
    #[serde(default)]
    pub demosaick: DemosaickSettings,
}

fn default_gamma() -> f64 {
    0.5
}

impl PipelineConfig {
    pub fn new(pattern: BayerPattern) -> Self {
        Self {
            pattern,
            stages: Stages::default(),
            gamma: default_gamma(),
            seed: 0,
            noise: NoiseSetting::Auto,
            noise_estimation: NoiseEstimationParams::default(),
            stabilizer_c: None,
            registration: RegistrationKind::default(),
            flow: FlowParams::default(),
            denoise: DenoiseParams::default(),
            demosaick: DemosaickSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if let NoiseSetting::Fixed { sigma } = self.noise {
            if !(sigma >= 0.0) {
                return Err(Error::Config(format!("negative noise std {sigma}")));
            }
        }
        if let Some(c) = self.stabilizer_c {
            if !(c > 0.0) {
                return Err(Error::Config(format!("stabilizer_c must be positive, got {c}")));
            }
        }
        if !(self.demosaick.residual_sigma > 0.0 && self.demosaick.noise_factor > 0.0) {
            return Err(Error::Config("demosaick bandwidth factors must be positive".into()));
        }
        self.flow.validate()?;
        self.denoise.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Mosaics every frame and adds i.i.d. Gaussian noise of std `sigma`.
pub fn simulate(clean: &Sequence, pattern: BayerPattern, sigma: f64, seed: u64) -> Result<Vec<CfaImage>> {
    simulate_with(clean, pattern, |_| sigma, seed)
}

/// Like [`simulate`] with a signal-dependent noise std `sigma(value)`.
pub fn simulate_with(clean: &Sequence, pattern: BayerPattern, sigma: impl Fn(f64) -> f64, seed: u64) -> Result<Vec<CfaImage>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    clean
        .frames()
        .iter()
        .map(|f| {
            let cfa = mosaic(f, pattern)?;
            let noisy = add_noise(cfa.image(), &sigma, &mut rng)?;
            CfaImage::new(noisy, pattern)
        })
        .collect()
}

/// Results of [`run_pipeline_frames`], with the intermediates of the
/// stages that ran.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub indices: Vec<usize>,
    /// Output frames, one per entry of `indices`.
    pub frames: Vec<Image>,
    pub noise_model: Option<NoiseModel>,
    pub observations: Option<Vec<Vec<NoiseObservation>>>,
    /// Denoised CFA frames, one per entry of `denoised_indices`.
    pub denoised: Option<Vec<CfaImage>>,
    pub denoised_indices: Vec<usize>,
    /// Directional initialization of every frame (spatio-temporal stage only).
    pub init: Option<Sequence>,
    /// Updated green of every frame (spatio-temporal stage only).
    pub green: Option<Sequence>,
}

fn timed<T>(stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    log::info!("{stage}: {:.2?}", start.elapsed());
    Ok(out)
}

fn quad_sequence(cfa: &[CfaImage]) -> Result<Sequence> {
    Sequence::new(cfa.iter().map(|c| cfa_to_quad(c).into_image()).collect())
}

fn noise_model(quads: &Sequence, cfg: &PipelineConfig) -> Result<(NoiseModel, Option<Vec<Vec<NoiseObservation>>>)> {
    match cfg.noise {
        NoiseSetting::Auto => {
            let (m, obs) = estimate_model(quads, &cfg.noise_estimation)?;
            Ok((m, Some(obs)))
        }
        NoiseSetting::Fixed { sigma } => {
            let channels = (0..quads.dims().2)
                .map(|c| {
                    let range = quads
                        .frames()
                        .iter()
                        .map(|f| f.channel(c).min_max())
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (lo, hi)| (a.min(lo), b.max(hi)));
                    ChannelModel::constant(sigma, range)
                })
                .collect();
            Ok((NoiseModel { channels }, None))
        }
    }
}

/// Runs the chain on a CFA sequence and returns every output frame.
pub fn run_pipeline(cfa: &[CfaImage], cfg: &PipelineConfig) -> Result<Sequence> {
    Sequence::new(run_pipeline_frames(cfa, cfg, None)?.frames)
}

/// Runs the chain and returns the frames listed in `wanted` (all when
/// `None`). Stages that only need the wanted frames skip the others.
pub fn run_pipeline_frames(cfa: &[CfaImage], cfg: &PipelineConfig, wanted: Option<&[usize]>) -> Result<PipelineOutput> {
    cfg.validate()?;
    let first = cfa.first().ok_or(Error::EmptySequence)?;
    if cfa.iter().any(|c| c.pattern() != cfg.pattern) {
        return Err(Error::Config(format!("frames are not in the configured {} pattern", cfg.pattern)));
    }
    let indices: Vec<usize> = match wanted {
        Some(w) => w.to_vec(),
        None => (0..cfa.len()).collect(),
    };
    if let Some(&bad) = indices.iter().find(|&&k| k >= cfa.len()) {
        return Err(Error::InvalidArgument(format!("frame {bad} out of range")));
    }
    let range = first.image().range_hint;
    let registration = cfg.registration.build(cfg.flow.clone());
    let all: Vec<usize> = (0..cfa.len()).collect();
    let needed = if cfg.stages.demosaick_st { &all } else { &indices };

    let needs_model = cfg.stages.denoise || (cfg.stages.demosaick_st && cfg.demosaick.h.is_none());
    let quads = quad_sequence(cfa)?;
    let (model, observations) = if needs_model {
        let (m, o) = timed("noise estimation", || noise_model(&quads, cfg))?;
        (Some(m), o)
    } else {
        (None, None)
    };

    let mut denoised = None;
    let mut stage_cfa: Vec<CfaImage> = cfa.to_vec();
    if cfg.stages.denoise {
        let model = model.as_ref().expect("model estimated for denoising");
        let stabilizers = build_stabilizers(model, cfg.stabilizer_c)?;
        let c = stabilizers[0].c();
        let stab_range = stabilizers.iter().map(|s| s.forward(range)).fold(f64::NEG_INFINITY, f64::max);
        let stabilized = timed("stabilization", || {
            Sequence::new(
                quads
                    .frames()
                    .iter()
                    .map(|q| Ok(stabilize_channels(q, &stabilizers, false)?.with_range(stab_range)))
                    .collect::<Result<_>>()?,
            )
        })?;
        let params = DenoiseParams { sigma: c, ..cfg.denoise.clone() };
        let frames = timed("denoising", || {
            needed
                .par_iter()
                .map(|&k| {
                    let d = denoise_frame(&stabilized, k, &params, registration.as_ref())?;
                    let q = QuadImage::new(stabilize_channels(&d, &stabilizers, true)?.with_range(range))?;
                    Ok(quad_to_cfa(&q, cfg.pattern))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        for (&k, f) in needed.iter().zip(&frames) {
            stage_cfa[k] = f.clone();
        }
        denoised = Some(frames);
    }

    let (mut frames, init, green) = if cfg.stages.demosaick_st {
        let green_model = model.as_ref().map(|m| &m.channels[QUAD_G1]);
        let interp = cfg.demosaick.interp_config(cfg.stages.denoise, green_model)?;
        let out = timed("spatio-temporal demosaicking", || {
            demosaick_sequence(&stage_cfa, &interp, registration.as_ref(), Some(&indices))
        })?;
        (out.frames, Some(out.init), Some(out.green))
    } else {
        let frames = timed("directional demosaicking", || {
            indices.par_iter().map(|&k| directional_init(&stage_cfa[k])).collect::<Result<Vec<_>>>()
        })?;
        (frames, None, None)
    };

    if cfg.stages.imaging_chain {
        frames = timed("imaging chain", || {
            frames
                .iter()
                .map(|f| Ok(gamma_correct(&gray_world_wb(f)?, cfg.gamma)))
                .collect::<Result<Vec<_>>>()
        })?;
    }

    Ok(PipelineOutput {
        denoised_indices: if denoised.is_some() { needed.clone() } else { Vec::new() },
        indices,
        frames,
        noise_model: model,
        observations,
        denoised,
        init,
        green,
    })
}

/// RMSE between a result and the central frame of `truth`. A single-frame
/// result is taken as the central frame; otherwise the lengths must agree.
pub fn central_rmse(result: &Sequence, truth: &Sequence) -> Result<f64> {
    let k = truth.central_index();
    let frame = match result.len() {
        1 => &result[0],
        n if n == truth.len() => &result[k],
        n => return Err(Error::InvalidArgument(format!("result has {n} frames, truth {}", truth.len()))),
    };
    rmse(frame, &truth[k])
}

/// Central-frame RMSE per sequence (rows) and variant (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub variants: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl EvalReport {
    pub fn new(variants: Vec<String>) -> Self {
        Self { variants, rows: Vec::new() }
    }

    pub fn push(&mut self, sequence: impl Into<String>, rmse: Vec<f64>) -> Result<()> {
        if rmse.len() != self.variants.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} variants",
                rmse.len(),
                self.variants.len()
            )));
        }
        self.rows.push((sequence.into(), rmse));
        Ok(())
    }

    /// Column means over the sequences.
    pub fn averages(&self) -> Vec<f64> {
        let n = self.rows.len().max(1) as f64;
        (0..self.variants.len())
            .map(|j| self.rows.iter().map(|r| r.1[j]).sum::<f64>() / n)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("# central-frame RMSE on unclipped values\n");
        s += "sequence";
        for v in &self.variants {
            s += ",";
            s += v;
        }
        s += "\n";
        let avg = ("average".to_string(), self.averages());
        for (name, vals) in self.rows.iter().chain(std::iter::once(&avg)) {
            s += name;
            for v in vals {
                let _ = write!(s, ",{v:.6}");
            }
            s += "\n";
        }
        s
    }

    pub fn to_text(&self) -> String {
        let w0 = self.rows.iter().map(|r| r.0.len()).chain([8]).max().unwrap_or(8);
        let widths: Vec<usize> = self.variants.iter().map(|v| v.len().max(8)).collect();
        let mut s = format!("{:<w0$}", "sequence");
        for (v, w) in self.variants.iter().zip(&widths) {
            let _ = write!(s, "  {v:>w$}");
        }
        s += "\n";
        let avg = ("average".to_string(), self.averages());
        for (name, vals) in self.rows.iter().chain(std::iter::once(&avg)) {
            let _ = write!(s, "{name:<w0$}");
            for (v, w) in vals.iter().zip(&widths) {
                let _ = write!(s, "  {v:>w$.3}");
            }
            s += "\n";
        }
        s
    }
}

/// One report row: central-frame RMSE of each variant against `truth`.
pub fn evaluate(sequence: &str, results: &[(String, Sequence)], truth: &Sequence) -> Result<EvalReport> {
    let mut report = EvalReport::new(results.iter().map(|r| r.0.clone()).collect());
    let vals = results.iter().map(|(_, s)| central_rmse(s, truth)).collect::<Result<Vec<_>>>()?;
    report.push(sequence, vals)?;
    Ok(report)
}
