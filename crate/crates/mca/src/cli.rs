//! Command-line surface: subcommands plus flags that override the config file.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{DataConfig, RunConfig, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "mca", version, about = "Associate people across pairs of calibrated cameras")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the elevated-plane homography of every camera pair.
    Homography,
    /// Run one configuration and write per-frame associations and scores.
    Associate {
        /// Also dump affinity matrices and per-match refactor factors.
        #[arg(long)]
        diagnostics: bool,
    },
    /// Evaluate the full hyperparameter grid and rank configurations.
    Sweep,
    /// Write a synthetic scene as a dataset directory with a run config.
    Synth,
    /// Score an associations file against the annotations.
    Score {
        #[arg(long, value_name = "CSV")]
        predictions: PathBuf,
    },
}

/// Flags win over the config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Dataset root in the WILDTRACK layout (replaces any synthetic source).
    #[arg(long, global = true, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Directory of match interchange files.
    #[arg(long, global = true, value_name = "DIR")]
    pub matches: Option<PathBuf>,
    /// Use a generated scene (replaces any dataset source).
    #[arg(long, global = true, conflicts_with = "data")]
    pub synth: bool,
    /// False correspondences per frame and pair in a generated scene.
    #[arg(long, global = true)]
    pub clutter_rate: Option<usize>,
    /// Camera pair as `A,B`; repeat for several.
    #[arg(long, global = true, value_parser = parse_pair)]
    pub pair: Vec<[u32; 2]>,
    /// Inclusive frame-id range as `FIRST,LAST`.
    #[arg(long, global = true, value_parser = parse_pair)]
    pub frames: Option<[u32; 2]>,
    /// Drop matches below this confidence.
    #[arg(long, global = true)]
    pub loftr_threshold: Option<f64>,
    /// Refactor distance coefficient in pixels; 0 disables refactoring.
    #[arg(long, global = true)]
    pub distance_coeff: Option<f64>,
    /// M4 (single frame) or M5 (multi-frame).
    #[arg(long, global = true)]
    pub metric: Option<String>,
    /// Frames averaged by M5, current included.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    /// Native to working resolution.
    #[arg(long, global = true)]
    pub scale: Option<f64>,
    /// Seed for RANSAC and scene generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Precomputed homographies JSON.
    #[arg(long, global = true, value_name = "FILE")]
    pub homographies: Option<PathBuf>,
    /// Disable the homography overlap mask.
    #[arg(long, global = true)]
    pub no_mask: bool,
}

fn parse_pair(s: &str) -> Result<[u32; 2], String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("`{s}`: expected two comma-separated integers"))?;
    let num = |t: &str| {
        t.trim()
            .parse::<u32>()
            .map_err(|_| format!("`{t}` is not a non-negative integer"))
    };
    Ok([num(a)?, num(b)?])
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(root) = &self.data {
            cfg.synth = None;
            let data = cfg.data.get_or_insert_with(DataConfig::default);
            data.root = Some(root.clone());
            data.calibrations = None;
            data.annotations = None;
        }
        if let Some(m) = &self.matches {
            cfg.data.get_or_insert_with(DataConfig::default).matches = Some(m.clone());
        }
        if self.synth {
            cfg.data = None;
            cfg.synth.get_or_insert_with(SynthConfig::default);
        }
        if let Some(c) = self.clutter_rate {
            cfg.synth.get_or_insert_with(SynthConfig::default).clutter_rate = c;
        }
        if !self.pair.is_empty() {
            cfg.pairs = Some(self.pair.clone());
        }
        if self.frames.is_some() {
            cfg.frames = self.frames;
        }
        if let Some(v) = self.loftr_threshold {
            cfg.run.loftr_threshold = v;
        }
        if let Some(v) = self.distance_coeff {
            cfg.run.distance_coefficient = v;
        }
        if let Some(v) = &self.metric {
            cfg.run.metric = v.clone();
        }
        if let Some(v) = self.window {
            cfg.pipeline.window = v;
        }
        if let Some(v) = self.scale {
            cfg.scale = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &self.homographies {
            cfg.homographies = Some(v.clone());
        }
        if self.no_mask {
            cfg.pipeline.mask = false;
        }
        cfg
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let cfg = self.apply(base);
        cfg.validate().context("invalid configuration")?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.overrides.resolve()?;
    match cli.command {
        Command::Homography => {
            commands::cmd_homography(&cfg)?;
        }
        Command::Associate { diagnostics } => {
            commands::cmd_associate(&cfg, diagnostics)?;
        }
        Command::Sweep => {
            commands::cmd_sweep(&cfg)?;
        }
        Command::Synth => {
            commands::cmd_synth(&cfg)?;
        }
        Command::Score { predictions } => {
            commands::cmd_score(&cfg, &predictions)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "mca",
            "sweep",
            "--synth",
            "--pair",
            "1,2",
            "--pair",
            "2, 3",
            "--seed",
            "9",
            "--metric",
            "M4",
            "--distance-coeff",
            "5",
            "--window",
            "4",
            "--no-mask",
        ])
        .unwrap();
        let cfg = cli.overrides.resolve().unwrap();
        assert_eq!(cfg.pairs, Some(vec![[1, 2], [2, 3]]));
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.run.metric, "M4");
        assert_eq!(cfg.run.distance_coefficient, 5.0);
        assert_eq!(cfg.pipeline.window, 4);
        assert!(!cfg.pipeline.mask);
        assert!(cfg.synth.is_some() && cfg.data.is_none());
    }

    #[test]
    fn data_flag_replaces_synth_source() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.toml");
        std::fs::write(&file, "seed = 3\n[synth]\nn_people = 4\n").unwrap();
        let file = file.to_str().unwrap();
        let cli = Cli::try_parse_from(["mca", "homography", "--config", file, "--data", "/d"]).unwrap();
        let cfg = cli.overrides.resolve().unwrap();
        assert!(cfg.synth.is_none());
        assert_eq!(cfg.data.unwrap().root, Some(PathBuf::from("/d")));
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Cli::try_parse_from(["mca", "sweep", "--pair", "1"]).is_err());
        assert!(Cli::try_parse_from(["mca", "sweep", "--synth", "--data", "x"]).is_err());
        let cli = Cli::try_parse_from(["mca", "sweep"]).unwrap();
        assert!(cli.overrides.resolve().is_err(), "no data source");
    }
}
