//! Run configuration: JSON config files layered over named presets.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use polyreuse_core::datasets::{load_cifar10, load_mnist, LabeledImages};
use polyreuse_core::net::{Layer, LossKind, NetworkSpec};
use polyreuse_core::polyproj::{Degree, GroupAxis, GroupScheme, GroupSpec};
use polyreuse_core::presets::{self, ArchId, Preset};
use polyreuse_core::train::TrainConfig;

pub const DATA_ROOT_ENV: &str = "POLYREUSE_DATA_ROOT";
const FETCH_HINT: &str = "run scripts/fetch_data.sh <data-root> or point --data-root/POLYREUSE_DATA_ROOT at a directory holding mnist/ (IDX files) and cifar-10-batches-bin/";

/// One scheme entry in a config file, addressed by layer label.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeEntry {
    pub layer: String,
    pub degree: Degree,
    pub group_size: usize,
    /// Defaults per layer kind: filter-row for conv layers whose kernel width
    /// equals `group_size`, contiguous-flat otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<GroupAxis>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub epochs: Option<u32>,
    pub batch_size: Option<usize>,
    pub rng_seed: Option<u64>,
    pub loss: Option<LossKind>,
}

/// On-disk JSON config. Every field is optional on top of a preset; a config
/// without a preset must name an architecture.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub arch: Option<String>,
    pub scheme: Option<Vec<SchemeEntry>>,
    pub train: Option<TrainOverrides>,
    pub data_root: Option<PathBuf>,
    /// Training examples drawn from the train split (default: 50000 for the
    /// MNIST sets, everything for CIFAR).
    pub train_examples: Option<usize>,
    pub baseline_label: Option<String>,
    pub baseline_params: Option<u64>,
}

/// Fully resolved run description.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub name: String,
    pub arch: ArchId,
    pub scheme_entries: Vec<SchemeEntry>,
    pub train: TrainConfig,
    pub baseline_label: String,
    pub baseline_params: u64,
    pub baseline_arch: Option<ArchId>,
    pub reference_accuracy: Option<f64>,
    pub data_root: PathBuf,
    pub train_examples: Option<usize>,
}

impl Resolved {
    pub fn network(&self) -> NetworkSpec {
        self.arch.network()
    }

    pub fn scheme(&self, net: &NetworkSpec) -> Result<GroupScheme> {
        scheme_from_entries(net, &self.scheme_entries)
    }
}

fn default_axis(layer: &Layer, group_size: usize) -> GroupAxis {
    match layer {
        Layer::Conv2D { kw, .. } if *kw == group_size => GroupAxis::FilterRow,
        _ => GroupAxis::ContiguousFlat,
    }
}

pub fn scheme_from_entries(net: &NetworkSpec, entries: &[SchemeEntry]) -> Result<GroupScheme> {
    let labels = net.trainable_labels();
    let mut scheme = GroupScheme::none(net);
    for entry in entries {
        let (index, _) = labels
            .iter()
            .find(|(_, l)| *l == entry.layer)
            .ok_or_else(|| {
                anyhow!(
                    "scheme names unknown layer {:?}; trainable layers are {}",
                    entry.layer,
                    labels.iter().map(|(_, l)| l.as_str()).collect::<Vec<_>>().join(", ")
                )
            })?;
        let axis = entry
            .axis
            .unwrap_or_else(|| default_axis(&net.layers()[*index], entry.group_size));
        scheme.per_layer[*index] = Some(GroupSpec {
            degree: entry.degree,
            group_size: entry.group_size,
            axis,
        });
    }
    scheme.validate(net).map_err(|e| anyhow!("invalid scheme: {e}"))?;
    Ok(scheme)
}

pub fn entries_from_preset(preset: &Preset) -> Vec<SchemeEntry> {
    let net = preset.network();
    net.trainable_labels()
        .into_iter()
        .zip(&preset.groups)
        .filter_map(|((_, label), spec)| {
            spec.map(|s| SchemeEntry {
                layer: label,
                degree: s.degree,
                group_size: s.group_size,
                axis: Some(s.axis),
            })
        })
        .collect()
}

pub struct ResolveArgs<'a> {
    pub preset: Option<&'a str>,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub epochs: Option<u32>,
    pub data_root: Option<&'a Path>,
}

pub fn resolve(args: ResolveArgs<'_>) -> Result<Resolved> {
    let file: FileConfig = match args.config {
        None => FileConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
    };

    let preset_name = args.preset.map(str::to_owned).or(file.preset.clone());
    let preset = match &preset_name {
        Some(name) => Some(presets::find(name).ok_or_else(|| {
            anyhow!(
                "unknown preset {name:?}; available: {}",
                presets::all().iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
            )
        })?),
        None => None,
    };

    let arch = match (&file.arch, &preset) {
        (Some(name), _) => ArchId::from_name(name)
            .ok_or_else(|| anyhow!("unknown arch {name:?}; expected mnist_fc, mnist_cnn or cifar_cnn"))?,
        (None, Some(p)) => p.arch,
        (None, None) => bail!("either --preset or a config with \"preset\"/\"arch\" is required"),
    };

    let scheme_entries = match (&file.scheme, &preset) {
        (Some(entries), _) => entries.clone(),
        (None, Some(p)) => entries_from_preset(p),
        (None, None) => Vec::new(),
    };

    let mut train = preset
        .as_ref()
        .map(|p| p.train)
        .unwrap_or_else(|| arch.default_train());
    if let Some(t) = &file.train {
        if let Some(v) = t.learning_rate {
            train.learning_rate = v;
        }
        if let Some(v) = t.epochs {
            train.epochs = v;
        }
        if let Some(v) = t.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = t.rng_seed {
            train.rng_seed = v;
        }
        if let Some(v) = t.loss {
            train.loss = v;
        }
    }
    if let Some(seed) = args.seed {
        train.rng_seed = seed;
    }
    if let Some(epochs) = args.epochs {
        train.epochs = epochs;
    }

    let data_root = args
        .data_root
        .map(Path::to_path_buf)
        .or(file.data_root.clone())
        .or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"));

    let (baseline_label, baseline_params) = match &preset {
        Some(p) => (
            file.baseline_label.clone().unwrap_or_else(|| p.baseline_label.to_string()),
            file.baseline_params.unwrap_or(p.baseline_params),
        ),
        None => (
            file.baseline_label.clone().unwrap_or_else(|| "unapproximated model (32-bit)".into()),
            file.baseline_params.unwrap_or(0),
        ),
    };

    Ok(Resolved {
        name: preset_name.unwrap_or_else(|| arch.name().to_string()),
        arch,
        scheme_entries,
        train,
        baseline_label,
        baseline_params,
        baseline_arch: preset.as_ref().and_then(|p| p.baseline_arch),
        reference_accuracy: preset.as_ref().and_then(|p| p.reference_accuracy),
        data_root,
        train_examples: file.train_examples,
    })
}

/// Loads the train/test splits for an architecture. MNIST keeps the first
/// `train_examples` (default 50000) training images and the official 10k
/// test set; CIFAR loads the five training batches and the test batch, and
/// is averaged to grayscale to match the single-channel architecture.
pub fn load_dataset(resolved: &Resolved) -> Result<(LabeledImages<f64>, LabeledImages<f64>)> {
    let root = &resolved.data_root;
    match resolved.arch {
        ArchId::MnistFc | ArchId::MnistCnn | ArchId::Lenet300_100 => {
            let dir = root.join("mnist");
            let train = load_mnist::<f64>(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )
            .with_context(|| format!("loading MNIST under {}; {FETCH_HINT}", dir.display()))?;
            let test = load_mnist::<f64>(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
            )
            .with_context(|| format!("loading MNIST under {}; {FETCH_HINT}", dir.display()))?;
            let keep = resolved.train_examples.unwrap_or(50_000).min(train.len());
            let (train, _held_out) = train.split_at(keep);
            Ok((train, test))
        }
        ArchId::CifarCnn => {
            let dir = root.join("cifar-10-batches-bin");
            let train_paths: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
            let train = load_cifar10::<f64>(&train_paths)
                .with_context(|| format!("loading CIFAR-10 under {}; {FETCH_HINT}", dir.display()))?;
            let test = load_cifar10::<f64>(&[dir.join("test_batch.bin")])
                .with_context(|| format!("loading CIFAR-10 under {}; {FETCH_HINT}", dir.display()))?;
            let mut train = train.to_grayscale();
            let test = test.to_grayscale();
            if let Some(keep) = resolved.train_examples {
                train = train.split_at(keep.min(train.len())).0;
            }
            Ok((train, test))
        }
    }
}
