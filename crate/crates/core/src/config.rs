//! Experiment configuration: flat `dotted.key = value` files with
//! per-command defaults.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated. Every key a command does not know is rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::DEFAULT_EPSILON;
use crate::directclr::{ProjectorVariant, SubvectorSpec};
use crate::dynamics::FlowConfig;
use crate::error::{Error, Result};
use crate::models::{InitMode, InitSpec, Nonlinearity};
use crate::synthdata::{AugmentationSpec, DataSpec, DEFAULT_SCALE};

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "DIMCOLLAPSE_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimSingle,
    SimTwoLayer,
    DepthSweep,
    DirectclrProbe,
    Spectrum,
}

impl Command {
    pub const ALL: [Command; 5] = [
        Command::SimSingle,
        Command::SimTwoLayer,
        Command::DepthSweep,
        Command::DirectclrProbe,
        Command::Spectrum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SimSingle => "sim-single",
            Command::SimTwoLayer => "sim-two-layer",
            Command::DepthSweep => "depth-sweep",
            Command::DirectclrProbe => "directclr-probe",
            Command::Spectrum => "spectrum",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownCommand(s.to_string()))
    }
}

/// Toy residual encoder used by `directclr-probe`; its input is `data.dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderSpec {
    pub rep_dim: usize,
    pub hidden: usize,
}

/// Projector-variant training in `directclr-probe`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTraining {
    pub variants: Vec<ProjectorVariant>,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSpec,
    pub aug: AugmentationSpec,
    /// Amplitudes swept by `sim-single`.
    pub amplitudes: Vec<f64>,
    pub depth: usize,
    pub nonlinearity: Nonlinearity,
    pub init: InitSpec,
    pub flow: FlowConfig,
    pub epsilon: f64,
    /// Depths and nonlinearities crossed by `depth-sweep`.
    pub depths: Vec<usize>,
    pub nonlinearities: Vec<Nonlinearity>,
    pub encoder: EncoderSpec,
    pub subvector: SubvectorSpec,
    pub probe: ProbeTraining,
    /// Headerless CSV of embeddings, one per row, for `spectrum`.
    pub spectrum_input: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(command: Command) -> Self {
        let dim = 16;
        let seed = 0;
        let mut cfg = Self {
            command,
            seed,
            output_dir: PathBuf::from("out").join(command.name()),
            data: DataSpec {
                dim,
                scale: DEFAULT_SCALE,
            },
            aug: AugmentationSpec {
                dim,
                block_start: 8,
                block_size: 8,
                amplitude: 0.0,
            },
            amplitudes: vec![0.0, 0.1, 0.5, 1.0, 2.0, 4.0],
            depth: 1,
            nonlinearity: Nonlinearity::None,
            init: InitSpec {
                seed,
                sv_min: 0.1,
                sv_max: 1.0,
                mode: InitMode::DistinctSingularValues,
            },
            flow: FlowConfig {
                learning_rate: 1e-3,
                steps: 5000,
                batch_size: 32,
                resample: true,
                record_every: 50,
                seed,
                normalize: false,
            },
            epsilon: DEFAULT_EPSILON,
            depths: vec![1, 2, 3],
            nonlinearities: vec![Nonlinearity::None, Nonlinearity::Relu],
            encoder: EncoderSpec {
                rep_dim: 32,
                hidden: 32,
            },
            subvector: SubvectorSpec { d0: 8 },
            probe: ProbeTraining {
                variants: ProjectorVariant::ALL.to_vec(),
                learning_rate: 0.5,
                steps: 1000,
                batch_size: 64,
            },
            spectrum_input: None,
        };
        match command {
            Command::SimSingle | Command::Spectrum => {}
            Command::DirectclrProbe => cfg.aug.amplitude = 0.5,
            Command::SimTwoLayer => {
                cfg.depth = 2;
                cfg.data.scale = 2.0;
                cfg.init.sv_min = 0.009;
                cfg.init.sv_max = 0.01;
                cfg.flow.learning_rate = 2.5e-4;
                cfg.flow.steps = 64_000;
                cfg.flow.batch_size = 64;
                cfg.flow.record_every = 500;
            }
            Command::DepthSweep => {
                cfg.aug.amplitude = 0.1;
                cfg.flow.learning_rate = 1e-3;
                cfg.flow.steps = 10_000;
                cfg.flow.record_every = 500;
            }
        }
        cfg
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |message: String| Error::ConfigValidation {
            key: key.to_string(),
            message,
        };
        fn num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
            value.parse::<T>().map_err(|_| format!("cannot parse `{value}`"))
        }
        fn list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
            value
                .split(',')
                .map(|t| t.trim())
                .filter(|t| !t.is_empty())
                .map(num)
                .collect()
        }
        fn flag(value: &str) -> std::result::Result<bool, String> {
            match value {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(format!("expected true or false, got `{other}`")),
            }
        }
        match key {
            "command" => self.command = value.parse()?,
            "seed" => {
                self.seed = num(value).map_err(bad)?;
                self.init.seed = self.seed;
                self.flow.seed = self.seed;
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "data.dim" => {
                let d: usize = num(value).map_err(bad)?;
                self.data.dim = d;
                self.aug.dim = d;
            }
            "data.scale" => self.data.scale = num(value).map_err(bad)?,
            "aug.block_start" => self.aug.block_start = num(value).map_err(bad)?,
            "aug.block_size" => self.aug.block_size = num(value).map_err(bad)?,
            "aug.amplitude" => self.aug.amplitude = num(value).map_err(bad)?,
            "aug.sweep" => self.amplitudes = list(value).map_err(bad)?,
            "model.depth" => self.depth = num(value).map_err(bad)?,
            "model.nonlinearity" => self.nonlinearity = value.parse().map_err(bad)?,
            "init.mode" => self.init.mode = value.parse().map_err(bad)?,
            "init.sv_min" => self.init.sv_min = num(value).map_err(bad)?,
            "init.sv_max" => self.init.sv_max = num(value).map_err(bad)?,
            "flow.learning_rate" => self.flow.learning_rate = num(value).map_err(bad)?,
            "flow.steps" => self.flow.steps = num(value).map_err(bad)?,
            "flow.batch_size" => self.flow.batch_size = num(value).map_err(bad)?,
            "flow.resample" => self.flow.resample = flag(value).map_err(bad)?,
            "flow.record_every" => self.flow.record_every = num(value).map_err(bad)?,
            "flow.normalize" => self.flow.normalize = flag(value).map_err(bad)?,
            "analysis.epsilon" => self.epsilon = num(value).map_err(bad)?,
            "sweep.depths" => self.depths = list(value).map_err(bad)?,
            "sweep.nonlinearities" => self.nonlinearities = list(value).map_err(bad)?,
            "encoder.rep_dim" => self.encoder.rep_dim = num(value).map_err(bad)?,
            "encoder.hidden" => self.encoder.hidden = num(value).map_err(bad)?,
            "directclr.d0" => self.subvector.d0 = num(value).map_err(bad)?,
            "projector.variants" => self.probe.variants = list(value).map_err(bad)?,
            "projector.learning_rate" => self.probe.learning_rate = num(value).map_err(bad)?,
            "projector.steps" => self.probe.steps = num(value).map_err(bad)?,
            "projector.batch_size" => self.probe.batch_size = num(value).map_err(bad)?,
            "spectrum.input" => {
                self.spectrum_input = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            _ => return Err(bad("unknown key".into())),
        }
        Ok(())
    }

    /// Every key with its current value, in a stable order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        fn join<T: ToString>(items: &[T]) -> String {
            items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
        }
        vec![
            ("command", self.command.to_string()),
            ("seed", self.seed.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("data.dim", self.data.dim.to_string()),
            ("data.scale", self.data.scale.to_string()),
            ("aug.block_start", self.aug.block_start.to_string()),
            ("aug.block_size", self.aug.block_size.to_string()),
            ("aug.amplitude", self.aug.amplitude.to_string()),
            ("aug.sweep", join(&self.amplitudes)),
            ("model.depth", self.depth.to_string()),
            ("model.nonlinearity", self.nonlinearity.to_string()),
            ("init.mode", self.init.mode.to_string()),
            ("init.sv_min", self.init.sv_min.to_string()),
            ("init.sv_max", self.init.sv_max.to_string()),
            ("flow.learning_rate", self.flow.learning_rate.to_string()),
            ("flow.steps", self.flow.steps.to_string()),
            ("flow.batch_size", self.flow.batch_size.to_string()),
            ("flow.resample", self.flow.resample.to_string()),
            ("flow.record_every", self.flow.record_every.to_string()),
            ("flow.normalize", self.flow.normalize.to_string()),
            ("analysis.epsilon", self.epsilon.to_string()),
            ("sweep.depths", join(&self.depths)),
            ("sweep.nonlinearities", join(&self.nonlinearities)),
            ("encoder.rep_dim", self.encoder.rep_dim.to_string()),
            ("encoder.hidden", self.encoder.hidden.to_string()),
            ("directclr.d0", self.subvector.d0.to_string()),
            ("projector.variants", join(&self.probe.variants)),
            ("projector.learning_rate", self.probe.learning_rate.to_string()),
            ("projector.steps", self.probe.steps.to_string()),
            ("projector.batch_size", self.probe.batch_size.to_string()),
            (
                "spectrum.input",
                self.spectrum_input
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
        ]
    }

    pub fn serialize(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| {
            Err(Error::ConfigValidation {
                key: key.to_string(),
                message: message.to_string(),
            })
        };
        if self.data.dim < 2 {
            return bad("data.dim", "must be >= 2");
        }
        if !(self.data.scale > 0.0 && self.data.scale.is_finite()) {
            return bad("data.scale", "must be positive and finite");
        }
        if self.aug.block_start + self.aug.block_size > self.data.dim {
            return bad("aug.block_size", "augmented block extends past data.dim");
        }
        if !(self.aug.amplitude >= 0.0 && self.aug.amplitude.is_finite()) {
            return bad("aug.amplitude", "must be >= 0 and finite");
        }
        if self.amplitudes.is_empty() || self.amplitudes.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return bad("aug.sweep", "needs one or more amplitudes, all >= 0");
        }
        if self.depth == 0 {
            return bad("model.depth", "must be >= 1");
        }
        if !(self.init.sv_min > 0.0) {
            return bad("init.sv_min", "must be positive");
        }
        if !(self.init.sv_max > self.init.sv_min && self.init.sv_max.is_finite()) {
            return bad("init.sv_max", "must exceed init.sv_min");
        }
        if !(self.flow.learning_rate >= 0.0 && self.flow.learning_rate.is_finite()) {
            return bad("flow.learning_rate", "must be >= 0 and finite");
        }
        if self.flow.steps == 0 {
            return bad("flow.steps", "must be >= 1");
        }
        if self.flow.batch_size < 2 {
            return bad("flow.batch_size", "must be >= 2");
        }
        if self.flow.record_every == 0 {
            return bad("flow.record_every", "must be >= 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("analysis.epsilon", "must lie in (0, 1)");
        }
        if self.depths.is_empty() || self.depths.contains(&0) {
            return bad("sweep.depths", "needs one or more depths, all >= 1");
        }
        if self.nonlinearities.is_empty() {
            return bad("sweep.nonlinearities", "needs one or more entries");
        }
        if self.encoder.rep_dim == 0 {
            return bad("encoder.rep_dim", "must be >= 1");
        }
        if self.encoder.hidden == 0 {
            return bad("encoder.hidden", "must be >= 1");
        }
        if self.subvector.d0 == 0 || self.subvector.d0 > self.encoder.rep_dim {
            return bad("directclr.d0", "must lie in 1..=encoder.rep_dim");
        }
        if self.probe.variants.is_empty() {
            return bad("projector.variants", "needs one or more variants");
        }
        if !(self.probe.learning_rate >= 0.0 && self.probe.learning_rate.is_finite()) {
            return bad("projector.learning_rate", "must be >= 0 and finite");
        }
        if self.probe.steps == 0 {
            return bad("projector.steps", "must be >= 1");
        }
        if self.probe.batch_size < 2 {
            return bad("projector.batch_size", "must be >= 2");
        }
        if self.command == Command::Spectrum && self.spectrum_input.is_none() {
            return bad("spectrum.input", "the spectrum command needs an input file");
        }
        Ok(())
    }

    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
    }
}

/// Parses config text on top of `command`'s defaults. A `command` key in the
/// text, if present, must agree with `command`.
pub fn parse_for(command: Command, text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::defaults(command);
    let mut seen: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::ConfigParse {
                line: line_no,
                message: "empty key".into(),
            });
        }
        if seen.iter().any(|k| k == key) {
            return Err(Error::ConfigParse {
                line: line_no,
                message: format!("duplicate key `{key}`"),
            });
        }
        seen.push(key.to_string());
        if key == "command" {
            let named: Command = value.parse().map_err(|_| Error::ConfigValidation {
                key: key.into(),
                message: format!("unknown command `{value}`"),
            })?;
            if named != command {
                return Err(Error::ConfigValidation {
                    key: key.into(),
                    message: format!("file is for `{named}` but `{command}` was requested"),
                });
            }
            continue;
        }
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses config text, taking the command from its `command` key
/// (`sim-single` when absent).
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let command = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == "command")
        .map(|(_, v)| {
            v.trim().parse::<Command>().map_err(|_| Error::ConfigValidation {
                key: "command".into(),
                message: format!("unknown command `{}`", v.trim()),
            })
        })
        .transpose()?
        .unwrap_or(Command::SimSingle);
    parse_for(command, text)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse(&read(path)?)
}

pub fn load_config_for(command: Command, path: &Path) -> Result<ExperimentConfig> {
    parse_for(command, &read(path)?)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
