//! `synth`: write a synthetic sequence in the on-disk sequence layout.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use flowseg::dataset::{export_sequence, synth_scene, SynthConfig, SynthSequence};

use crate::CliError;

/// Name of the effective generator settings written next to the sequence.
pub const CONFIG_ECHO: &str = "synth_config.toml";

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory, created if missing
    pub out: PathBuf,
    /// Generator settings as TOML (SynthConfig keys); flags win
    #[arg(long, value_name = "FILE")]
    pub scene_config: Option<PathBuf>,
    /// Start from scene N of the synthetic benchmark suite
    #[arg(long, value_name = "N")]
    pub benchmark_scene: Option<u64>,
    /// Generator seed [default: 0]
    #[arg(long)]
    pub scene_seed: Option<u64>,
    /// Rectangles to spawn, 0 to 8 [default: 3]
    #[arg(long)]
    pub objects: Option<usize>,
    /// Frames to render [default: 200]
    #[arg(long)]
    pub frames: Option<usize>,
    /// Image width [default: 320]
    #[arg(long)]
    pub width: Option<usize>,
    /// Image height [default: 240]
    #[arg(long)]
    pub height: Option<usize>,
    /// Gaussian flow noise sigma in pixels [default: 0]
    #[arg(long)]
    pub flow_noise: Option<f64>,
    /// Per-pixel mask flip probability [default: 0]
    #[arg(long)]
    pub mask_noise: Option<f64>,
    /// Frames before the evaluation range [default: the pipeline's k]
    #[arg(long)]
    pub warmup: Option<usize>,
}

impl SynthArgs {
    pub fn config(&self) -> Result<SynthConfig, CliError> {
        let mut cfg = match (&self.scene_config, self.benchmark_scene) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "--scene-config and --benchmark-scene are exclusive".into(),
                ))
            }
            (Some(path), None) => read_config(path)?,
            (None, Some(n)) => SynthConfig::benchmark_scene(n),
            (None, None) => SynthConfig::default(),
        };
        let set = |slot: &mut usize, v: Option<usize>| *slot = v.unwrap_or(*slot);
        set(&mut cfg.n_objects, self.objects);
        set(&mut cfg.frame_count, self.frames);
        set(&mut cfg.width, self.width);
        set(&mut cfg.height, self.height);
        cfg.seed = self.scene_seed.unwrap_or(cfg.seed);
        cfg.flow_noise_sigma = self.flow_noise.unwrap_or(cfg.flow_noise_sigma);
        cfg.mask_noise = self.mask_noise.unwrap_or(cfg.mask_noise);
        Ok(cfg)
    }
}

fn read_config(path: &Path) -> Result<SynthConfig, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    toml::from_str(&text).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        message: e.message().to_string(),
    })
}

/// Generates and exports the sequence, then echoes the settings with the
/// realized objects so the scene can be regenerated from the echo alone.
pub fn cmd_synth(args: &SynthArgs, k: usize) -> Result<SynthSequence, CliError> {
    let cfg = args.config()?;
    let seq = synth_scene(&cfg)?;
    export_sequence(&seq, &args.out, args.warmup.unwrap_or(k))?;
    let echo = SynthConfig {
        objects: Some(seq.objects.clone()),
        ..cfg
    };
    let text = toml::to_string(&echo).map_err(|e| CliError::Config {
        path: args.out.join(CONFIG_ECHO),
        message: e.to_string(),
    })?;
    let path = args.out.join(CONFIG_ECHO);
    fs::write(&path, text).map_err(CliError::io(&path))?;
    Ok(seq)
}
