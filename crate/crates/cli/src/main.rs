mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfaseq::flow::{FlowParams, tvl1_flow};
use cfaseq::netpbm::{frame_path, read_frames, read_image, write_frames, write_image, bitdepth_for, quantize};
use cfaseq::noise::{estimate_model, observations_csv, parse_observations_csv, NoiseEstimationParams, NoiseModel};
use cfaseq::pipeline::{central_rmse, run_pipeline_frames, simulate_with, EvalReport, PipelineConfig};
use cfaseq::synth::synthetic_sequence;
use cfaseq::{cfa::cfa_to_quad, BayerPattern, CfaImage, Image, Sequence};
use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Error, Debug)]
enum CliError {
    #[error(transparent)]
    Core(#[from] cfaseq::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "cfaseq", version, about = "Denoising and demosaicking of Bayer CFA image sequences")]
struct Cli {
    /// Worker threads; 0 picks one per available core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Log stage timings and diagnostics (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a clean procedural color sequence.
    Synthesize {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest camera speed, in pixels per frame.
        #[arg(long, default_value_t = 1.5)]
        max_speed: f64,
    },
    /// Mosaic clean color frames and add Gaussian noise.
    Simulate {
        #[arg(long = "in")]
        input: PathBuf,
        /// Noise standard deviation.
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value = "RGGB")]
        pattern: BayerPattern,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Signal-dependent noise: std becomes sqrt(sigma^2 + gain * value).
        #[arg(long, default_value_t = 0.0)]
        gain: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the noise curve of a CFA sequence and fit the noise model.
    EstimateNoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "RGGB")]
        pattern: BayerPattern,
        #[arg(long, default_value_t = 16)]
        bins: usize,
        /// Fitted model, one text line per channel.
        #[arg(long)]
        out: PathBuf,
        /// Raw per-bin observations.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the processing chain on a CFA sequence.
    Pipeline {
        #[arg(long = "in")]
        input: PathBuf,
        /// TOML configuration; defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured Bayer pattern.
        #[arg(long)]
        pattern: Option<BayerPattern>,
        /// Config override `section.key=value` (TOML value syntax), repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Process only these frame indices (comma separated).
        #[arg(long, value_delimiter = ',')]
        frames: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the noise model, noise curve, denoised CFA, directional
        /// initialization, updated green and the effective config.
        #[arg(long)]
        dump_intermediates: bool,
    },
    /// Central-frame RMSE of result sequences against a ground truth.
    Evaluate {
        /// Result directories; each directory name labels a column.
        #[arg(long, num_args = 1.., required = true)]
        variants: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Row label of this sequence.
        #[arg(long, default_value = "sequence")]
        name: String,
    },
    /// Render noise observations, and optionally the fitted model, as a PNG.
    PlotNoise {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 640)]
        width: u32,
        #[arg(long, default_value_t = 480)]
        height: u32,
    },
    /// TV-L1 optical flow between two single-channel frames, as a `.flo` file.
    Flow {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        dst: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the pipeline configuration.
    Config {
        /// Print the full default configuration as TOML.
        #[arg(long, required = true)]
        dump: bool,
        #[arg(long, default_value = "RGGB")]
        pattern: BayerPattern,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::FAILURE;
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synthesize { out, width, height, frames, seed, max_speed } => {
            if width < 2 || height < 2 || frames == 0 {
                return Err(CliError::Usage("need at least a 2x2 frame and one frame".into()));
            }
            let seq = synthetic_sequence(seed, width, height, frames, max_speed);
            write_frames(&out, seq.frames())?;
        }
        Command::Simulate { input, sigma, pattern, seed, gain, out } => {
            if !(sigma >= 0.0 && gain >= 0.0) {
                return Err(CliError::Usage("sigma and gain must be non-negative".into()));
            }
            let clean = Sequence::new(read_frames(&input)?)?;
            let cfa = simulate_with(&clean, pattern, |v| (sigma * sigma + gain * v.max(0.0)).sqrt(), seed)?;
            write_frames(&out, &cfa.into_iter().map(CfaImage::into_image).collect::<Vec<_>>())?;
        }
        Command::EstimateNoise { input, pattern, bins, out, csv } => {
            let cfa = read_cfa(&input, pattern)?;
            let quads = Sequence::new(cfa.iter().map(|c| cfa_to_quad(c).into_image()).collect())?;
            let params = NoiseEstimationParams { bins, ..Default::default() };
            let (model, obs) = estimate_model(&quads, &params)?;
            write_text(&out, &model.to_text())?;
            if let Some(csv) = csv {
                write_text(&csv, &observations_csv(&obs))?;
            }
        }
        Command::Pipeline { input, config, pattern, overrides, frames, out, dump_intermediates } => {
            let cfg = load_config(config.as_deref(), pattern, &overrides)?;
            let cfa = read_cfa(&input, cfg.pattern)?;
            if let Some(w) = &frames {
                if let Some(&bad) = w.iter().find(|&&i| i >= cfa.len()) {
                    return Err(CliError::Usage(format!("frame {bad} out of range (sequence has {})", cfa.len())));
                }
            }
            let result = run_pipeline_frames(&cfa, &cfg, frames.as_deref())?;
            create_dir(&out)?;
            for (img, &i) in result.frames.iter().zip(&result.indices) {
                write_indexed(&out, i, img)?;
            }
            if dump_intermediates {
                let dump = out.join("intermediates");
                create_dir(&dump)?;
                write_text(&dump.join("config.toml"), &cfg.to_toml())?;
                if let Some(m) = &result.noise_model {
                    write_text(&dump.join("noise_model.txt"), &m.to_text())?;
                }
                if let Some(obs) = &result.observations {
                    write_text(&dump.join("noise_curve.csv"), &observations_csv(obs))?;
                }
                if let Some(den) = &result.denoised {
                    let dir = dump.join("denoised");
                    create_dir(&dir)?;
                    for (c, &i) in den.iter().zip(&result.denoised_indices) {
                        write_indexed(&dir, i, c.image())?;
                    }
                }
                for (name, seq) in [("init", &result.init), ("green", &result.green)] {
                    if let Some(seq) = seq {
                        write_frames(dump.join(name), seq.frames())?;
                    }
                }
            }
        }
        Command::Evaluate { variants, truth, out, name } => {
            let truth = Sequence::new(read_frames(&truth)?)?;
            let labels = variants
                .iter()
                .map(|v| v.file_name().map_or_else(|| v.display().to_string(), |n| n.to_string_lossy().into_owned()))
                .collect();
            let mut report = EvalReport::new(labels);
            let mut row = Vec::new();
            for v in &variants {
                row.push(central_rmse(&Sequence::new(read_frames(v)?)?, &truth)?);
            }
            report.push(name, row)?;
            write_text(&out, &report.to_csv())?;
            print!("{}", report.to_text());
        }
        Command::PlotNoise { csv, model, out, width, height } => {
            let obs = parse_observations_csv(&read_text(&csv)?)?;
            let model = model.map(|m| read_text(&m).and_then(|t| Ok(NoiseModel::from_text(&t)?))).transpose()?;
            let img = plot::render(&obs, model.as_ref(), width, height)?;
            img.save(&out).map_err(|e| CliError::Plot(format!("{}: {e}", out.display())))?;
        }
        Command::Flow { src, dst, out } => {
            let (a, b) = (read_image(&src)?, read_image(&dst)?);
            let flow = tvl1_flow(&a, &b, &FlowParams::default())?;
            flow.write_flo(&out)?;
        }
        Command::Config { dump: _, pattern } => print!("{}", PipelineConfig::new(pattern).to_toml()),
    }
    Ok(())
}

fn read_cfa(dir: &Path, pattern: BayerPattern) -> Result<Vec<CfaImage>> {
    read_frames(dir)?
        .into_iter()
        .map(|f| CfaImage::new(f, pattern).map_err(CliError::from))
        .collect()
}

/// Config file (or defaults), then `--pattern`, then each `--set` override.
fn load_config(path: Option<&Path>, pattern: Option<BayerPattern>, overrides: &[String]) -> Result<PipelineConfig> {
    let mut table: toml::Table = match path {
        Some(p) => read_text(p)?.parse().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => toml::Table::new(),
    };
    if let Some(p) = pattern {
        table.insert("pattern".into(), toml::Value::String(p.to_string()));
    }
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {o:?} is not KEY=VALUE")))?;
        let value = parse_value(raw.trim());
        let mut parts: Vec<&str> = key.trim().split('.').collect();
        let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| CliError::Config(format!("empty key in {o:?}")))?;
        let mut node = &mut table;
        for p in parts {
            node = node
                .entry(p)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("{p} in {o:?} is not a section")))?;
        }
        node.insert(last.into(), value);
    }
    if !table.contains_key("pattern") {
        return Err(CliError::Config("no Bayer pattern: pass --pattern or set it in the config".into()));
    }
    Ok(PipelineConfig::from_toml(&table.to_string())?)
}

/// A TOML value, or a bare string when the text is not valid TOML.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn write_indexed(dir: &Path, index: usize, img: &Image) -> Result<()> {
    let maxval = img.range_hint.clamp(1.0, 65535.0);
    write_image(frame_path(dir, index, img.channels()), &quantize(img, maxval), bitdepth_for(maxval))?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}
