//! Flat key=value run configuration.
//!
//! Lines hold one `key = value` assignment; `#` starts a comment; unknown
//! keys are rejected so typos cannot silently fall back to defaults. The
//! same `set` path serves file parsing and `--set` overrides.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::loss::{Formulation, LossConfig};
use crate::net::{LayerSpec, NetworkSpec};
use crate::scene::dataset::{ChannelMode, DatasetParams, ObjectSpec};
use crate::scene::primitive::PrimitiveKind;
use crate::scene::SymmetryClass;
use crate::tensor::Scalar;
use crate::trainer::Schedule;

/// Two-conv-block architecture sizes; the input extent and channel count
/// come from the dataset section.
#[derive(Clone, Debug)]
pub struct NetworkConfig {
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub hidden_dim: usize,
    pub descriptor_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            conv1_filters: 16,
            conv1_kernel: 9,
            conv2_filters: 7,
            conv2_kernel: 5,
            hidden_dim: 256,
            descriptor_dim: 16,
        }
    }
}

impl NetworkConfig {
    pub fn spec(&self, channels: usize, patch: usize) -> Result<NetworkSpec> {
        NetworkSpec::new(
            (channels, patch, patch),
            vec![
                LayerSpec::Conv {
                    out_channels: self.conv1_filters,
                    kernel_h: self.conv1_kernel,
                    kernel_w: self.conv1_kernel,
                },
                LayerSpec::MaxPool2x2,
                LayerSpec::Relu,
                LayerSpec::Conv {
                    out_channels: self.conv2_filters,
                    kernel_h: self.conv2_kernel,
                    kernel_w: self.conv2_kernel,
                },
                LayerSpec::MaxPool2x2,
                LayerSpec::Relu,
                LayerSpec::Fully {
                    out_dim: self.hidden_dim,
                },
                LayerSpec::Relu,
                LayerSpec::Fully {
                    out_dim: self.descriptor_dim,
                },
            ],
            self.descriptor_dim,
        )
    }
}

#[derive(Clone, Debug)]
pub struct Config {
    pub dataset: DatasetParams,
    pub network: NetworkConfig,
    pub margin: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub formulation: Formulation,
    pub schedule: Schedule,
}

fn default_objects() -> Vec<ObjectSpec> {
    let spec = |name: &str, kind, symmetry| ObjectSpec {
        name: name.into(),
        kind,
        symmetry,
        extent_m: 0.12,
    };
    vec![
        spec("box", PrimitiveKind::Box, SymmetryClass::Symmetric180),
        spec("wedge", PrimitiveKind::Wedge, SymmetryClass::None),
        spec("house", PrimitiveKind::Composite, SymmetryClass::None),
        spec("hut", PrimitiveKind::Composite, SymmetryClass::None),
        spec("cylinder", PrimitiveKind::Cylinder, SymmetryClass::RotationInvariant),
    ]
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dataset: DatasetParams {
                objects: default_objects(),
                template_level: 2,
                training_level: 3,
                n_copies: 1,
                n_test_per_object: 40,
                distance_m: 0.6,
                window_m: 0.4,
                patch: 64,
                channels: ChannelMode::Depth,
                depth_sigma_m: 0.003,
                intensity_sigma: 0.02,
                fractal_amplitude: 0.5,
                fractal_octaves: 4,
                speckle_fraction: 0.05,
                grazing_limit_deg: 80.0,
            },
            network: NetworkConfig::default(),
            margin: 0.01,
            lambda: 1e-6,
            epsilon: 1e-8,
            formulation: Formulation::Ratio,
            schedule: Schedule::default(),
        }
    }
}

fn parse_objects(value: &str) -> std::result::Result<Vec<ObjectSpec>, String> {
    value
        .split(',')
        .map(|item| {
            let fields: Vec<&str> = item.trim().split(':').collect();
            if fields.len() != 4 {
                return Err(format!(
                    "object {:?} must be name:kind:symmetry:extentM",
                    item.trim()
                ));
            }
            let kind = PrimitiveKind::parse(fields[1])
                .ok_or_else(|| format!("unknown primitive kind {:?}", fields[1]))?;
            let symmetry = SymmetryClass::parse(fields[2])
                .ok_or_else(|| format!("unknown symmetry class {:?}", fields[2]))?;
            let extent_m: f64 = fields[3]
                .parse()
                .map_err(|_| format!("bad extent {:?}", fields[3]))?;
            Ok(ObjectSpec {
                name: fields[0].to_string(),
                kind,
                symmetry,
                extent_m,
            })
        })
        .collect()
}

fn render_objects(objects: &[ObjectSpec]) -> String {
    objects
        .iter()
        .map(|o| format!("{}:{}:{}:{}", o.name, o.kind.as_str(), o.symmetry.as_str(), o.extent_m))
        .collect::<Vec<_>>()
        .join(",")
}

impl Config {
    /// Applies one assignment. Every dataset, network, loss and schedule
    /// field is reachable here.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(value: &str, key: &str) -> std::result::Result<T, String> {
            value
                .trim()
                .parse()
                .map_err(|_| format!("bad value {:?} for {}", value.trim(), key))
        }
        let v = value.trim();
        match key {
            "objects" => self.dataset.objects = parse_objects(v)?,
            "templateLevel" => self.dataset.template_level = num(v, key)?,
            "trainingLevel" => self.dataset.training_level = num(v, key)?,
            "nCopies" => self.dataset.n_copies = num(v, key)?,
            "nTestPerObject" => self.dataset.n_test_per_object = num(v, key)?,
            "distanceM" => self.dataset.distance_m = num(v, key)?,
            "windowM" => self.dataset.window_m = num(v, key)?,
            "patch" => self.dataset.patch = num(v, key)?,
            "channels" => {
                self.dataset.channels = ChannelMode::parse(v)
                    .ok_or_else(|| format!("channels must be depth|shaded|both, got {:?}", v))?
            }
            "depthSigmaM" => self.dataset.depth_sigma_m = num(v, key)?,
            "intensitySigma" => self.dataset.intensity_sigma = num(v, key)?,
            "fractalAmplitude" => self.dataset.fractal_amplitude = num(v, key)?,
            "fractalOctaves" => self.dataset.fractal_octaves = num(v, key)?,
            "speckleFraction" => self.dataset.speckle_fraction = num(v, key)?,
            "grazingLimitDeg" => self.dataset.grazing_limit_deg = num(v, key)?,
            "conv1Filters" => self.network.conv1_filters = num(v, key)?,
            "conv1Kernel" => self.network.conv1_kernel = num(v, key)?,
            "conv2Filters" => self.network.conv2_filters = num(v, key)?,
            "conv2Kernel" => self.network.conv2_kernel = num(v, key)?,
            "hiddenDim" => self.network.hidden_dim = num(v, key)?,
            "descriptorDim" => self.network.descriptor_dim = num(v, key)?,
            "margin" => self.margin = num(v, key)?,
            "lambda" => self.lambda = num(v, key)?,
            "epsilon" => self.epsilon = num(v, key)?,
            "formulation" => {
                self.formulation = match v {
                    "ratio" => Formulation::Ratio,
                    "squaredHinge" => Formulation::SquaredHinge,
                    _ => return Err(format!("formulation must be ratio|squaredHinge, got {:?}", v)),
                }
            }
            "initialEpochs" => self.schedule.initial_epochs = num(v, key)?,
            "initialLr" => self.schedule.initial_lr = num(v, key)?,
            "momentum" => self.schedule.momentum = num(v, key)?,
            "lrDecay" => self.schedule.lr_decay = num(v, key)?,
            "lrDecayEvery" => self.schedule.lr_decay_every = num(v, key)?,
            "bootstrapRounds" => self.schedule.bootstrap_rounds = num(v, key)?,
            "epochsPerBootstrap" => self.schedule.epochs_per_bootstrap = num(v, key)?,
            "finalEpochs" => self.schedule.final_epochs = num(v, key)?,
            "batchSize" => self.schedule.batch_size = num(v, key)?,
            _ => return Err(format!("unknown key {:?}", key)),
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Config> {
        let mut cfg = Config::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("expected key = value, got {:?}", line),
            })?;
            cfg.set(key.trim(), value).map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message,
            })?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, path)
    }

    /// Applies repeatable `key=value` overrides on top of the parsed file.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {:?} is not key=value", item)))?;
            self.set(key.trim(), value)
                .map_err(Error::Config)?;
        }
        Ok(())
    }

    /// Canonical full-state rendering; keys sorted, one per line.
    pub fn canonical(&self) -> String {
        let mut pairs: Vec<(&str, String)> = vec![
            ("batchSize", self.schedule.batch_size.to_string()),
            ("bootstrapRounds", self.schedule.bootstrap_rounds.to_string()),
            ("channels", self.dataset.channels.as_str().to_string()),
            ("conv1Filters", self.network.conv1_filters.to_string()),
            ("conv1Kernel", self.network.conv1_kernel.to_string()),
            ("conv2Filters", self.network.conv2_filters.to_string()),
            ("conv2Kernel", self.network.conv2_kernel.to_string()),
            ("depthSigmaM", self.dataset.depth_sigma_m.to_string()),
            ("descriptorDim", self.network.descriptor_dim.to_string()),
            ("distanceM", self.dataset.distance_m.to_string()),
            ("epochsPerBootstrap", self.schedule.epochs_per_bootstrap.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("finalEpochs", self.schedule.final_epochs.to_string()),
            (
                "formulation",
                match self.formulation {
                    Formulation::Ratio => "ratio".to_string(),
                    Formulation::SquaredHinge => "squaredHinge".to_string(),
                },
            ),
            ("fractalAmplitude", self.dataset.fractal_amplitude.to_string()),
            ("fractalOctaves", self.dataset.fractal_octaves.to_string()),
            ("grazingLimitDeg", self.dataset.grazing_limit_deg.to_string()),
            ("hiddenDim", self.network.hidden_dim.to_string()),
            ("initialEpochs", self.schedule.initial_epochs.to_string()),
            ("initialLr", self.schedule.initial_lr.to_string()),
            ("intensitySigma", self.dataset.intensity_sigma.to_string()),
            ("lambda", self.lambda.to_string()),
            ("lrDecay", self.schedule.lr_decay.to_string()),
            ("lrDecayEvery", self.schedule.lr_decay_every.to_string()),
            ("margin", self.margin.to_string()),
            ("momentum", self.schedule.momentum.to_string()),
            ("nCopies", self.dataset.n_copies.to_string()),
            ("nTestPerObject", self.dataset.n_test_per_object.to_string()),
            ("objects", render_objects(&self.dataset.objects)),
            ("patch", self.dataset.patch.to_string()),
            ("speckleFraction", self.dataset.speckle_fraction.to_string()),
            ("templateLevel", self.dataset.template_level.to_string()),
            ("trainingLevel", self.dataset.training_level.to_string()),
            ("windowM", self.dataset.window_m.to_string()),
        ];
        pairs.sort_by_key(|&(k, _)| k);
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{} = {}", k, v);
        }
        out
    }

    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical().as_bytes());
        crate::net::checkpoint::hex(&hasher.finalize())
    }

    pub fn loss_config<T: Scalar>(&self) -> LossConfig<T> {
        LossConfig {
            margin: T::from_f64(self.margin),
            lambda: T::from_f64(self.lambda),
            epsilon: T::from_f64(self.epsilon),
            formulation: self.formulation,
        }
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        self.network
            .spec(self.dataset.channels.channels(), self.dataset.patch)
    }
}
